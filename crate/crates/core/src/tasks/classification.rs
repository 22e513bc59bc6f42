use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::buffers::Target;
use crate::error::{Error, Result};
use crate::nn::Mlp;

pub const MAX_COMPONENTS: usize = 16;
/// Squared distance beyond which a point belongs to no component.
pub const OUTLIER_THRESHOLD: f64 = 0.09;
pub const GRID_STEP: f64 = 0.02;
/// Cells per axis of the grid over `[-1, 1]`.
pub const GRID_CELLS: usize = 100;
pub const INPUT_NOISE_SD: f64 = 0.01;

const MEAN_RANGE: f64 = 0.8;
const MIN_SEPARATION: f64 = 0.25;

/// Two-dimensional classification over `[-1, 1]^2`: the label is the nearest
/// component mean within `sqrt(0.09) = 0.3`, otherwise the outlier class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianGridTask {
    pub means: Vec<[f64; 2]>,
}

impl GaussianGridTask {
    pub fn new(means: Vec<[f64; 2]>) -> Result<Self> {
        if means.is_empty() || means.len() > MAX_COMPONENTS {
            return Err(Error::Config(format!(
                "a grid task needs 1..={MAX_COMPONENTS} components, got {}",
                means.len()
            )));
        }
        Ok(Self { means })
    }

    /// Means drawn uniformly from `[-0.8, 0.8]^2`, at least 0.25 apart.
    pub fn from_seed(seed: u64, count: usize) -> Result<Self> {
        if count == 0 || count > MAX_COMPONENTS {
            return Self::new(vec![[0.0, 0.0]; count]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let mut means: Vec<[f64; 2]> = Vec::with_capacity(count);
            let mut attempts = 0;
            while means.len() < count && attempts < 10_000 {
                attempts += 1;
                let p = [
                    rng.random_range(-MEAN_RANGE..MEAN_RANGE),
                    rng.random_range(-MEAN_RANGE..MEAN_RANGE),
                ];
                if means.iter().all(|m| sq_dist(m, &p) >= MIN_SEPARATION * MIN_SEPARATION) {
                    means.push(p);
                }
            }
            if means.len() == count {
                return Self::new(means);
            }
        }
    }

    /// Number of classes including the outlier class.
    pub fn classes(&self) -> usize {
        self.means.len() + 1
    }

    pub fn outlier_class(&self) -> usize {
        self.means.len()
    }

    /// Nearest component within the threshold (ties to the lower index,
    /// boundary inclusive), else the outlier class.
    pub fn true_label(&self, x: &[f64]) -> usize {
        let p = [x[0], x[1]];
        let mut best = (f64::INFINITY, self.outlier_class());
        for (i, m) in self.means.iter().enumerate() {
            let d = sq_dist(m, &p);
            if d < best.0 {
                best = (d, i);
            }
        }
        if best.0 <= OUTLIER_THRESHOLD {
            best.1
        } else {
            self.outlier_class()
        }
    }

    /// Cell centers in raster order (second coordinate outer).
    pub fn grid() -> impl Iterator<Item = [f64; 2]> {
        let center = |i: usize| -1.0 + GRID_STEP * (i as f64 + 0.5);
        (0..GRID_CELLS).flat_map(move |r| (0..GRID_CELLS).map(move |c| [center(c), center(r)]))
    }

    /// `cycles` raster scans with input noise; labels come from the unperturbed cell centers.
    pub fn stream(&self, cycles: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, INPUT_NOISE_SD).expect("valid noise sd");
        let mut out = Vec::with_capacity(cycles * GRID_CELLS * GRID_CELLS);
        for _ in 0..cycles {
            for p in Self::grid() {
                let label = self.true_label(&p);
                out.push(Sample {
                    x: vec![p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)],
                    y: Target::Class(label),
                });
            }
        }
        out
    }

    /// Percentage of grid cells whose argmax prediction equals the true label.
    pub fn eval_acc(&self, model: &Mlp) -> Result<f64> {
        self.eval_acc_with(|x| model.forward(x))
    }

    pub fn eval_acc_with<F>(&self, mut predict: F) -> Result<f64>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut correct = 0usize;
        for p in Self::grid() {
            let z = predict(&p)?;
            if argmax(&z) == self.true_label(&p) {
                correct += 1;
            }
        }
        Ok(100.0 * correct as f64 / (GRID_CELLS * GRID_CELLS) as f64)
    }

    /// Share (percent) of grid cells per class.
    pub fn label_shares(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.classes()];
        for p in Self::grid() {
            counts[self.true_label(&p)] += 1;
        }
        let total = (GRID_CELLS * GRID_CELLS) as f64;
        counts.into_iter().map(|c| 100.0 * c as f64 / total).collect()
    }
}

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn argmax(z: &[f64]) -> usize {
    z.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

pub fn gen_classification_stream(task: &GaussianGridTask, cycles: usize, seed: u64) -> Vec<Sample> {
    task.stream(cycles, seed)
}

/// `cycles_each` cycles of `first` followed by `cycles_each` cycles of `second`.
pub fn gen_switched_stream(
    first: &GaussianGridTask,
    second: &GaussianGridTask,
    cycles_each: usize,
    seed: u64,
) -> Vec<Sample> {
    let mut out = first.stream(cycles_each, seed);
    out.extend(second.stream(cycles_each, seed.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    out
}
