use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0, "softplus only reaches positive values");
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Linear-interpolation quantile (order statistics at `(len - 1) * rho`).
pub fn quantile(values: &[f64], rho: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = (sorted.len() - 1) as f64 * rho.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Rate in `[0, 1]` of how close a record's disagreement `delta_tau` is to the
/// threshold: 1 at or below `delta_q`, 0 at or above the estimated maximum
/// `delta_q / rho`, linear in between.
pub fn compute_eta(delta_tau: f64, delta_q: f64, rho: f64) -> f64 {
    let upper = delta_q + delta_q * (1.0 - rho) / rho;
    let span = upper - delta_q;
    if !(span > 0.0) {
        return 1.0;
    }
    let clipped = delta_tau.clamp(delta_q, upper);
    (1.0 - (clipped - delta_q) / span).clamp(0.0, 1.0)
}

/// Correction rate: the `gamma` for which blending the stored feature toward
/// the model output leaves a disagreement of `eta * delta_tau + (1 - eta) * delta_q`.
pub fn compute_gamma(delta_tau: f64, eta: f64, delta_q: f64) -> f64 {
    if !(delta_tau > 0.0) {
        return 0.0;
    }
    let target = eta * delta_tau + (1.0 - eta) * delta_q;
    (1.0 - (target / delta_tau).max(0.0).sqrt()).clamp(0.0, 1.0)
}

/// Exponential moving average of `1 - gamma` used as the replay priority.
pub fn update_priority(gamma_bar: f64, gamma: f64, lambda: f64) -> f64 {
    ((1.0 - lambda) * gamma_bar + lambda * (1.0 - gamma)).clamp(0.0, 1.0)
}

/// `(1 - gamma) z + gamma h`.
pub fn correct_feature(z: &[f64], h: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if z.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: h.len(),
        });
    }
    Ok(z.iter().zip(h).map(|(z, h)| (1.0 - gamma) * z + gamma * h).collect())
}

/// Gradients of the multiplier objectives `-beta (L_rs - L_fifo)` and
/// `-alpha (E[eta (delta - delta_q)])` with respect to `beta` and `alpha`.
/// `compensated_reg_mean` is the batch mean of `eta * (delta - delta_q)`.
/// Returns `(g_beta, g_alpha)`.
pub fn multiplier_gradients(loss_fifo: f64, loss_rs: f64, compensated_reg_mean: f64) -> (f64, f64) {
    (-(loss_rs - loss_fifo), -compensated_reg_mean)
}

/// Self-tuned loss weights and the disagreement threshold.
///
/// `alpha = softplus(alpha_pre)` and `beta = logistic(beta_pre)`, so the
/// domains `alpha >= 0` and `beta in [0, 1]` hold for any pre-image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveWeights {
    pub alpha_pre: f64,
    pub beta_pre: f64,
    /// `None` until the first regularization batch has been seen.
    pub delta_q: Option<f64>,
    pub rho: f64,
    pub lambda: f64,
    pub lr_mult: f64,
}

impl AdaptiveWeights {
    pub fn new(alpha: f64, beta: f64, rho: f64, lambda: f64, lr_mult: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("initial alpha must be positive, got {alpha}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Config(format!("initial beta must lie in (0, 1), got {beta}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {rho}")));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        if !(lr_mult > 0.0 && lr_mult.is_finite()) {
            return Err(Error::Config(format!("multiplier learning rate must be positive, got {lr_mult}")));
        }
        Ok(Self {
            alpha_pre: softplus_inverse(alpha),
            beta_pre: (beta / (1.0 - beta)).ln(),
            delta_q: None,
            rho,
            lambda,
            lr_mult,
        })
    }

    pub fn alpha(&self) -> f64 {
        softplus(self.alpha_pre)
    }

    pub fn beta(&self) -> f64 {
        logistic(self.beta_pre)
    }

    pub fn delta_q_or_zero(&self) -> f64 {
        self.delta_q.unwrap_or(0.0)
    }

    /// Estimated maximum disagreement `delta_q / rho`.
    pub fn delta_q_upper(&self) -> f64 {
        let q = self.delta_q_or_zero();
        q + q * (1.0 - self.rho) / self.rho
    }

    /// Mixes the batch's `rho`-quantile into the threshold at rate
    /// `batch_size / reservoir_capacity`. The first batch sets it outright.
    pub fn update_delta_q(&mut self, deltas: &[f64], batch_size: usize, reservoir_capacity: usize) {
        let Some(q) = quantile(deltas, self.rho) else {
            return;
        };
        self.delta_q = Some(match self.delta_q {
            None => q,
            Some(prev) => {
                let rate = (batch_size as f64 / reservoir_capacity as f64).min(1.0);
                (1.0 - rate) * prev + rate * q
            }
        });
    }

    /// One descent step on each enabled multiplier through its constraining map.
    pub fn apply_gradients(&mut self, g_beta: f64, g_alpha: f64, adapt_beta: bool, adapt_alpha: bool) {
        if adapt_beta && g_beta.is_finite() {
            let b = self.beta();
            let next = self.beta_pre - self.lr_mult * g_beta * b * (1.0 - b);
            if next.is_finite() {
                self.beta_pre = next;
            }
        }
        if adapt_alpha && g_alpha.is_finite() {
            let next = self.alpha_pre - self.lr_mult * g_alpha * logistic(self.alpha_pre);
            if next.is_finite() {
                self.alpha_pre = next;
            }
        }
    }
}
