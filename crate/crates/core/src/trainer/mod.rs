//! Adaptive dark experience replay.
//!
//! The step minimizes
//!
//! ```text
//! (1 - beta) E_fifo[nll] + beta E_rs[nll] + alpha E_rs[(1 - gamma)^2 * 0.5 |h(x) - z|^2]
//! ```
//!
//! where `beta` and `alpha` act as Lagrange multipliers for two equality
//! constraints: equal replay and stream losses, and a feature disagreement
//! equal to the running quantile threshold `delta_q`. Records whose stored
//! feature disagrees with the model well beyond the threshold get their
//! feature pulled toward the current output (correction) and their replay
//! priority lowered (blocking).

mod learner;
mod objective;
mod weights;

pub use learner::{Learner, LearnerConfig, StepReport};
pub use objective::{der_objective, LossParts};
pub use weights::{
    compute_eta, compute_gamma, correct_feature, logistic, multiplier_gradients, quantile,
    softplus, softplus_inverse, update_priority, AdaptiveWeights,
};

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Which A2ER mechanisms are active. Plain DER has all of them off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mechanisms {
    pub adapt_alpha: bool,
    pub adapt_beta: bool,
    pub block: bool,
    pub correct: bool,
}

impl Mechanisms {
    pub const ALL: Self = Self {
        adapt_alpha: true,
        adapt_beta: true,
        block: true,
        correct: true,
    };

    pub const NONE: Self = Self {
        adapt_alpha: false,
        adapt_beta: false,
        block: false,
        correct: false,
    };
}

/// Training condition: the baseline, the full method, or one ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DER")]
    Der,
    /// Without adaptation of `alpha`.
    #[serde(rename = "-Aa")]
    NoAlphaAdaptation,
    /// Without adaptation of `beta`.
    #[serde(rename = "-Ab")]
    NoBetaAdaptation,
    /// Without blocking.
    #[serde(rename = "-B")]
    NoBlock,
    /// Without correction.
    #[serde(rename = "-C")]
    NoCorrection,
    #[serde(rename = "A2ER")]
    A2er,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Der,
        Method::NoAlphaAdaptation,
        Method::NoBetaAdaptation,
        Method::NoBlock,
        Method::NoCorrection,
        Method::A2er,
    ];

    pub fn mechanisms(self) -> Mechanisms {
        let all = Mechanisms::ALL;
        match self {
            Method::Der => Mechanisms::NONE,
            Method::NoAlphaAdaptation => Mechanisms {
                adapt_alpha: false,
                ..all
            },
            Method::NoBetaAdaptation => Mechanisms {
                adapt_beta: false,
                ..all
            },
            Method::NoBlock => Mechanisms { block: false, ..all },
            Method::NoCorrection => Mechanisms {
                correct: false,
                ..all
            },
            Method::A2er => all,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Der => "DER",
            Method::NoAlphaAdaptation => "-Aa",
            Method::NoBetaAdaptation => "-Ab",
            Method::NoBlock => "-B",
            Method::NoCorrection => "-C",
            Method::A2er => "A2ER",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let normalized = s.trim().to_ascii_uppercase();
        Method::ALL
            .into_iter()
            .find(|m| m.label().to_ascii_uppercase() == normalized)
            .or(match normalized.as_str() {
                "AA" | "NO-ALPHA" => Some(Method::NoAlphaAdaptation),
                "AB" | "NO-BETA" => Some(Method::NoBetaAdaptation),
                "B" | "NO-BLOCK" => Some(Method::NoBlock),
                "C" | "NO-CORRECTION" => Some(Method::NoCorrection),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}
