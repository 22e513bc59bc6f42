//! Replay buffers: FIFO, generalized reservoir, and the plural reservoir stack.

mod counter;
mod fifo;
mod plural;
mod reservoir;

use serde::{Deserialize, Serialize};

pub use counter::{counter_value, ln_q, CounterDesign, CounterKind};
pub use fifo::FifoBuffer;
pub use plural::{
    nu_from_zeta, rejection_probability, GammaStats, LayerSpec, PassOutcome, PluralStack,
    ReplayBatch, StackSnapshot, StackStats, OMISSION_EPSILON,
};
pub use reservoir::{OfferResult, ReservoirBuffer};

/// Supervised target of a stored datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Real(f64),
    Class(usize),
}

/// One stored datum.
///
/// `z` is the model output recorded when the datum first entered a reservoir;
/// it stays empty while the record lives in the FIFO buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    pub x: Vec<f64>,
    pub y: Target,
    pub z: Vec<f64>,
    /// Replay priority in `[0, 1]`.
    pub gamma_bar: f64,
}

impl Record {
    /// A fresh record with maximal priority and no stored feature.
    pub fn new(id: u64, x: Vec<f64>, y: Target) -> Self {
        Self {
            id,
            x,
            y,
            z: Vec::new(),
            gamma_bar: 1.0,
        }
    }

    pub fn has_feature(&self) -> bool {
        !self.z.is_empty()
    }
}
