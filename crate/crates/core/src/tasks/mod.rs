//! Nonstationary stream generators, ground-truth oracles and evaluation metrics.
//!
//! Streams are pure functions of `(task, seed)`.

mod classification;
mod regression;

pub use classification::{
    gen_classification_stream, gen_switched_stream, GaussianGridTask, GRID_CELLS, GRID_STEP,
    INPUT_NOISE_SD, MAX_COMPONENTS, OUTLIER_THRESHOLD,
};
pub use regression::{
    gen_regression_stream, SineComponent, SineMixtureTask, MAX_SINES, SWEEP_LEN, SWEEP_MIN,
    SWEEP_STEP,
};


use serde::{Deserialize, Serialize};

use crate::buffers::Target;
use crate::error::{Error, Result};
use crate::nn::{HeadKind, Mlp};

/// One stream element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Target,
}

/// How often the learner trains and for how long.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSchedule {
    pub cycles: usize,
    /// A training session starts after this many new stream points.
    pub train_every: usize,
    /// Upper bound on gradient steps per session.
    pub updates_per_session: usize,
}

impl StreamSchedule {
    pub fn regression() -> Self {
        Self {
            cycles: 5,
            train_every: 16,
            updates_per_session: 16,
        }
    }

    pub fn classification() -> Self {
        Self {
            cycles: 5,
            train_every: 32,
            updates_per_session: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 || self.train_every == 0 || self.updates_per_session == 0 {
            return Err(Error::Config(format!(
                "schedule fields must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// A fully specified task, serializable so runs can be replayed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Regression(SineMixtureTask),
    Classification(GaussianGridTask),
    /// `first` for the first half of the cycles, then `second`.
    Switched {
        first: GaussianGridTask,
        second: GaussianGridTask,
    },
}

/// Final evaluation of a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Score {
    Kld(f64),
    Acc(f64),
    /// Switched stream: accuracy on the first task when the stream switches,
    /// on the second task at the end, and on the first task at the end.
    SwitchedAcc {
        first: f64,
        second: f64,
        first_final: f64,
    },
}

impl Score {
    /// Scalar summary, higher is better for accuracies and lower for KLD.
    pub fn value(&self) -> f64 {
        match *self {
            Score::Kld(v) | Score::Acc(v) => v,
            Score::SwitchedAcc { first, second, .. } => 0.5 * (first + second),
        }
    }

    pub fn lower_is_better(&self) -> bool {
        matches!(self, Score::Kld(_))
    }

    /// Both halves at or above `level` (always false for non-switched scores).
    pub fn balanced(&self, level: f64) -> bool {
        matches!(*self, Score::SwitchedAcc { first, second, .. } if first >= level && second >= level)
    }
}

const REGRESSION_PRESETS: [(u64, usize); 4] = [(101, 3), (102, 5), (103, 7), (104, 4)];
const CLASSIFICATION_PRESETS: [(u64, usize); 4] = [(201, 10), (202, 16), (203, 12), (204, 8)];
const SWITCHED_PRESET: [(u64, usize); 2] = [(301, 6), (302, 6)];

impl TaskSpec {
    /// Named presets: `r1`..`r4`, `c1`..`c4` and `switched`.
    pub fn preset(name: &str) -> Result<Self> {
        let lower = name.trim().to_ascii_lowercase();
        let index = |s: &str| -> Option<usize> {
            s.parse::<usize>().ok().filter(|i| (1..=4).contains(i)).map(|i| i - 1)
        };
        if let Some(i) = lower.strip_prefix('r').and_then(index) {
            let (seed, count) = REGRESSION_PRESETS[i];
            return Ok(TaskSpec::Regression(SineMixtureTask::from_seed(seed, count)?));
        }
        if let Some(i) = lower.strip_prefix('c').and_then(index) {
            let (seed, count) = CLASSIFICATION_PRESETS[i];
            return Ok(TaskSpec::Classification(GaussianGridTask::from_seed(seed, count)?));
        }
        if lower == "switched" || lower == "s" {
            let [(sa, ka), (sb, kb)] = SWITCHED_PRESET;
            return Ok(TaskSpec::Switched {
                first: GaussianGridTask::from_seed(sa, ka)?,
                second: GaussianGridTask::from_seed(sb, kb)?,
            });
        }
        Err(Error::Config(format!("unknown task preset `{name}`")))
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, TaskSpec::Regression(_))
    }

    pub fn input_dim(&self) -> usize {
        if self.is_regression() {
            1
        } else {
            2
        }
    }

    pub fn head(&self) -> HeadKind {
        match self {
            TaskSpec::Regression(_) => HeadKind::Gaussian,
            TaskSpec::Classification(t) => HeadKind::Categorical { classes: t.classes() },
            TaskSpec::Switched { first, second } => HeadKind::Categorical {
                classes: first.classes().max(second.classes()),
            },
        }
    }

    pub fn default_schedule(&self) -> StreamSchedule {
        if self.is_regression() {
            StreamSchedule::regression()
        } else {
            StreamSchedule::classification()
        }
    }

    /// Points in one cycle.
    pub fn cycle_len(&self) -> usize {
        if self.is_regression() {
            SWEEP_LEN
        } else {
            GRID_CELLS * GRID_CELLS
        }
    }

    /// The full stream. For a switched task, `cycles` counts each half.
    pub fn stream(&self, cycles: usize, seed: u64) -> Vec<Sample> {
        match self {
            TaskSpec::Regression(t) => t.stream(cycles, seed),
            TaskSpec::Classification(t) => t.stream(cycles, seed),
            TaskSpec::Switched { first, second } => {
                gen_switched_stream(first, second, cycles, seed)
            }
        }
    }

    /// Scores `model` as a final model. A switched task scores both halves
    /// with the same model here; [`crate::experiment`] scores the first half
    /// at the switch point.
    pub fn evaluate(&self, model: &Mlp) -> Result<Score> {
        Ok(match self {
            TaskSpec::Regression(t) => Score::Kld(t.eval_kld(model)?),
            TaskSpec::Classification(t) => Score::Acc(t.eval_acc(model)?),
            TaskSpec::Switched { first, second } => {
                let a = first.eval_acc(model)?;
                Score::SwitchedAcc {
                    first: a,
                    second: second.eval_acc(model)?,
                    first_final: a,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in ["r1", "r2", "r3", "r4", "c1", "C2", "c3", "c4", "switched"] {
            TaskSpec::preset(name).unwrap();
        }
        assert!(TaskSpec::preset("r5").is_err());
        assert!(TaskSpec::preset("x1").is_err());
        assert_eq!(TaskSpec::preset("r1").unwrap(), TaskSpec::preset("r1").unwrap());
    }

    #[test]
    fn json_round_trip() {
        for name in ["r3", "c2", "switched"] {
            let t = TaskSpec::preset(name).unwrap();
            let s = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<TaskSpec>(&s).unwrap(), t);
        }
    }

    #[test]
    fn heads_match_tasks() {
        assert_eq!(TaskSpec::preset("r1").unwrap().head(), HeadKind::Gaussian);
        assert_eq!(
            TaskSpec::preset("c1").unwrap().head(),
            HeadKind::Categorical { classes: 11 }
        );
    }

    #[test]
    fn identical_switched_halves_score_identically() {
        let a = GaussianGridTask::from_seed(1, 5).unwrap();
        let spec = TaskSpec::Switched {
            first: a.clone(),
            second: a,
        };
        let model = Mlp::zeros(&[2, 3, 6]);
        let Score::SwitchedAcc { first, second, .. } = spec.evaluate(&model).unwrap() else {
            panic!()
        };
        assert_eq!(first, second);
    }

    #[test]
    fn schedule_validation() {
        assert!(StreamSchedule::classification().validate().is_ok());
        let bad = StreamSchedule {
            cycles: 0,
            ..StreamSchedule::regression()
        };
        assert!(bad.validate().is_err());
    }
}
