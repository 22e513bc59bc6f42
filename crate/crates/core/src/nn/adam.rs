use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected adaptive-moment optimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self::with_decays(num_params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_decays(num_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step. Non-finite gradients leave everything untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("optimizer gradient".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut opt = Adam::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut opt = Adam::new(2, 1e-3);
        let mut p = vec![0.0, 0.0];
        for _ in 0..100 {
            opt.step(&mut p, &[2.0, -0.5]).unwrap();
        }
        assert!(p[0] < 0.0 && p[1] > 0.0);
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        // minimize (x - 3)^2 from x = 0
        let mut opt = Adam::new(1, 1e-2);
        let mut x = vec![0.0];
        let mut converged_at = None;
        for step in 1..=5000 {
            let g = 2.0 * (x[0] - 3.0);
            opt.step(&mut x, &[g]).unwrap();
            if converged_at.is_none() && (x[0] - 3.0f64).abs() < 1e-3 {
                converged_at = Some(step);
            }
        }
        assert!(converged_at.is_some());
        assert!((x[0] - 3.0).abs() < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut opt = Adam::new(2, 1e-3);
        let mut p = vec![1.0, 1.0];
        assert!(opt.step(&mut p, &[f64::NAN, 0.0]).is_err());
        assert!(opt.step(&mut p, &[0.0]).is_err());
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(opt.steps(), 0);
    }
}
