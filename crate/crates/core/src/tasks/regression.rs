use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::buffers::Target;
use crate::error::{Error, Result};
use crate::nn::{kld_gaussian, Mlp};

pub const SWEEP_MIN: f64 = -2.5;
pub const SWEEP_STEP: f64 = 0.001;
/// Points per sweep of `[-2.5, 2.5)`.
pub const SWEEP_LEN: usize = 5000;
pub const MAX_SINES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// One-dimensional regression target: a sum of sines observed with Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineMixtureTask {
    pub components: Vec<SineComponent>,
    pub noise_sd: f64,
}

impl SineMixtureTask {
    pub fn new(components: Vec<SineComponent>, noise_sd: f64) -> Result<Self> {
        if components.is_empty() || components.len() > MAX_SINES {
            return Err(Error::Config(format!(
                "a sine mixture needs 1..={MAX_SINES} components, got {}",
                components.len()
            )));
        }
        if !(noise_sd >= 0.0) {
            return Err(Error::Config(format!("noise sd must be nonnegative, got {noise_sd}")));
        }
        Ok(Self { components, noise_sd })
    }

    /// Random components: amplitudes in `[0.2, 1]`, angular frequencies in
    /// `[0.5, 3]`, phases in `[0, 2 pi)`.
    pub fn from_seed(seed: u64, count: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let components = (0..count)
            .map(|_| SineComponent {
                amplitude: rng.random_range(0.2..1.0),
                frequency: rng.random_range(0.5..3.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        Self::new(components, 0.1)
    }

    pub fn mean(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.amplitude * (c.frequency * x + c.phase).sin())
            .sum()
    }

    /// The evaluation grid, which is also the order of one training cycle.
    pub fn sweep() -> impl Iterator<Item = f64> {
        (0..SWEEP_LEN).map(|i| SWEEP_MIN + SWEEP_STEP * i as f64)
    }

    /// `cycles` noisy sweeps, concatenated.
    pub fn stream(&self, cycles: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.noise_sd.max(0.0)).expect("valid noise sd");
        let mut out = Vec::with_capacity(cycles * SWEEP_LEN);
        for _ in 0..cycles {
            for x in Self::sweep() {
                let eps = if self.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                out.push(Sample {
                    x: vec![x],
                    y: Target::Real(self.mean(x) + eps),
                });
            }
        }
        out
    }

    /// Sum over the sweep grid of `KL(true || predicted)`.
    pub fn eval_kld(&self, model: &Mlp) -> Result<f64> {
        let true_sd = if self.noise_sd > 0.0 { self.noise_sd } else { 0.1 };
        Self::sweep().try_fold(0.0, |acc, x| {
            let z = model.forward(&[x])?;
            Ok(acc + kld_gaussian(self.mean(x), true_sd, z[0], z[1].exp())?)
        })
    }
}

/// Regression stream from an explicit seed (see [`SineMixtureTask::stream`]).
pub fn gen_regression_stream(task: &SineMixtureTask, cycles: usize, seed: u64) -> Vec<Sample> {
    task.stream(cycles, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_shape() {
        let task = SineMixtureTask::from_seed(1, 3).unwrap();
        let s = task.stream(5, 9);
        assert_eq!(s.len(), 25_000);
        assert_eq!(s[0].x, vec![-2.5]);
        assert!((s[4999].x[0] - 2.499).abs() < 1e-12);
        assert_eq!(s[5000].x, vec![-2.5]);
    }

    #[test]
    fn noiseless_stream_is_the_composite() {
        let mut task = SineMixtureTask::from_seed(2, 7).unwrap();
        task.noise_sd = 0.0;
        for s in task.stream(1, 0).iter().step_by(97) {
            let Target::Real(y) = s.y else { panic!() };
            assert_eq!(y, task.mean(s.x[0]));
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let task = SineMixtureTask::from_seed(3, 4).unwrap();
        assert_eq!(task.stream(2, 5), task.stream(2, 5));
        assert_ne!(task.stream(1, 5), task.stream(1, 6));
        assert_eq!(SineMixtureTask::from_seed(3, 4).unwrap(), task);
    }

    #[test]
    fn component_bounds() {
        assert!(SineMixtureTask::from_seed(1, 0).is_err());
        assert!(SineMixtureTask::from_seed(1, 8).is_err());
        let t = SineMixtureTask::from_seed(4, 7).unwrap();
        for c in &t.components {
            assert!((0.2..1.0).contains(&c.amplitude));
            assert!((0.5..3.0).contains(&c.frequency));
        }
    }

    #[test]
    fn kld_of_zero_predictor_is_positive() {
        let task = SineMixtureTask::from_seed(5, 3).unwrap();
        let model = Mlp::zeros(&[1, 4, 2]);
        assert!(task.eval_kld(&model).unwrap() > 0.0);
    }
}
