//! Continual-learning replay engine.
//!
//! Three pieces cooperate:
//!
//! * [`buffers`]: a FIFO buffer for the newest data, reservoir buffers whose
//!   acceptance rate is controlled by a generalized counter, and a serial stack
//!   of reservoirs that drops low-priority records while passing them down.
//! * [`trainer`]: the dark-experience-replay step with self-tuned loss weights,
//!   replay blocking of persistently wrong records, and stored-feature correction.
//! * [`nn`]: a small feed-forward network with exact gradients and an
//!   adaptive-moment optimizer.
//!
//! [`tasks`] provides the nonstationary toy streams, [`probe`] checks reservoir
//! membership probabilities by simulation, and [`experiment`] runs seeded
//! condition matrices over all of it.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buffers;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod probe;
pub mod tasks;
pub mod trainer;

pub use buffers::{
    counter_value, nu_from_zeta, rejection_probability, CounterDesign, CounterKind, FifoBuffer,
    OfferResult, PluralStack, Record, ReplayBatch, ReservoirBuffer, Target,
};
pub use error::{Error, Result};
pub use experiment::{BufferKind, ExperimentConfig};
pub use nn::{Adam, HeadKind, Mlp};
pub use tasks::{Score, StreamSchedule, TaskSpec};
pub use trainer::{AdaptiveWeights, Learner, Mechanisms, Method, StepReport};
