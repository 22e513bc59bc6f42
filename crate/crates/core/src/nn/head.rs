use serde::{Deserialize, Serialize};

use crate::buffers::Target;
use crate::error::{Error, Result};

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Likelihood attached to the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Output `(mean, log std)` of a univariate normal.
    Gaussian,
    /// Output logits over `classes` categories.
    Categorical { classes: usize },
}

impl HeadKind {
    pub fn output_dim(&self) -> usize {
        match self {
            Self::Gaussian => 2,
            Self::Categorical { classes } => *classes,
        }
    }

    /// Negative log-likelihood of `y` under the distribution encoded by `z`.
    pub fn nll(&self, z: &[f64], y: &Target) -> Result<f64> {
        let mut grad = vec![0.0; z.len()];
        self.nll_grad(z, y, &mut grad)
    }

    /// Negative log-likelihood; writes its gradient w.r.t. `z` into `grad`.
    pub fn nll_grad(&self, z: &[f64], y: &Target, grad: &mut [f64]) -> Result<f64> {
        if z.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: z.len(),
            });
        }
        match (self, y) {
            (Self::Gaussian, Target::Real(y)) => {
                let (mu, log_sigma) = (z[0], z[1]);
                let inv_sigma = (-log_sigma).exp();
                let r = (y - mu) * inv_sigma;
                grad[0] = -r * inv_sigma;
                grad[1] = 1.0 - r * r;
                Ok(0.5 * r * r + log_sigma + HALF_LN_TWO_PI)
            }
            (Self::Categorical { classes }, Target::Class(c)) => {
                if *c >= *classes {
                    return Err(Error::InvalidClass {
                        index: *c,
                        classes: *classes,
                    });
                }
                let probs = softmax(z);
                grad.copy_from_slice(&probs);
                grad[*c] -= 1.0;
                Ok(log_sum_exp(z) - z[*c])
            }
            _ => Err(Error::TargetKind),
        }
    }
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `KL(N(mu_p, sigma_p^2) || N(mu_q, sigma_q^2))`.
pub fn kld_gaussian(mu_p: f64, sigma_p: f64, mu_q: f64, sigma_q: f64) -> Result<f64> {
    for s in [sigma_p, sigma_q] {
        if !(s > 0.0) {
            return Err(Error::NonPositiveSigma(s));
        }
    }
    let ratio = sigma_p / sigma_q;
    let d = (mu_p - mu_q) / sigma_q;
    Ok((0.5 * (ratio * ratio + d * d - 1.0) - ratio.ln()).max(0.0))
}
