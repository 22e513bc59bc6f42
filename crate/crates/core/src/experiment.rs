//! Experiment protocol: run one seed, aggregate many, sweep a parameter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffers::{CounterDesign, CounterKind, LayerSpec};
use crate::error::{Error, Result};
use crate::tasks::{Score, StreamSchedule, TaskSpec};
use crate::trainer::{LearnerConfig, Method};
use crate::Learner;

/// Reservoir arrangement behind the FIFO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BufferKind {
    /// One classic reservoir.
    #[serde(rename = "RS")]
    Rs,
    /// One generalized reservoir with the deepest layer's `q`.
    #[serde(rename = "Q2S")]
    Q2s,
    /// Two generalized reservoirs of half capacity, no omission.
    #[serde(rename = "P2S")]
    P2s,
    /// Two generalized reservoirs of half capacity with omission.
    #[serde(rename = "O2S")]
    O2s,
}

impl BufferKind {
    pub const ALL: [BufferKind; 4] = [BufferKind::Rs, BufferKind::Q2s, BufferKind::P2s, BufferKind::O2s];

    pub fn label(self) -> &'static str {
        match self {
            BufferKind::Rs => "RS",
            BufferKind::Q2s => "Q2S",
            BufferKind::P2s => "P2S",
            BufferKind::O2s => "O2S",
        }
    }
}

impl std::fmt::Display for BufferKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for BufferKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BufferKind::ALL
            .into_iter()
            .find(|b| b.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown buffer `{s}`")))
    }
}

/// Everything needed to replay an experiment exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub buffer: BufferKind,
    /// Task preset name, kept for labeling.
    pub task_name: String,
    pub task: TaskSpec,
    pub schedule: StreamSchedule,
    pub fifo_capacity: usize,
    /// Total reservoir capacity, split evenly over the layers.
    pub rs_capacity: usize,
    pub batch_size: usize,
    pub alpha_init: f64,
    pub beta_init: f64,
    pub rho: f64,
    pub lambda: f64,
    /// Counter family of the generalized reservoirs.
    pub counter: CounterKind,
    /// Balance `q` per layer, shallow to deep.
    pub q: Vec<f64>,
    pub zeta: f64,
    pub learning_rate: f64,
    pub lr_mult: f64,
    pub hidden: Vec<usize>,
    pub seeds: usize,
    pub root_seed: u64,
}

impl ExperimentConfig {
    /// Defaults for a task preset; the schedule follows the task type.
    pub fn for_task(task_name: &str) -> Result<Self> {
        let task = TaskSpec::preset(task_name)?;
        Ok(Self {
            method: Method::A2er,
            buffer: BufferKind::Rs,
            task_name: task_name.to_ascii_lowercase(),
            schedule: task.default_schedule(),
            task,
            fifo_capacity: 512,
            rs_capacity: 512,
            batch_size: 32,
            alpha_init: 1.0,
            beta_init: 0.5,
            rho: 0.5,
            lambda: 0.5,
            counter: CounterKind::QLog,
            q: vec![1.5, 1.0],
            zeta: 0.2,
            learning_rate: 1e-3,
            lr_mult: 1e-2,
            hidden: vec![32, 32],
            seeds: 20,
            root_seed: 0,
        })
    }

    /// Reservoir layers implied by the buffer kind.
    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        let deepest = *self
            .q
            .last()
            .ok_or_else(|| Error::Config("at least one q value is required".into()))?;
        let layers = match self.buffer {
            BufferKind::Rs => vec![LayerSpec {
                capacity: self.rs_capacity,
                design: CounterDesign::classic(),
            }],
            BufferKind::Q2s => vec![LayerSpec {
                capacity: self.rs_capacity,
                design: CounterDesign::new(self.counter, deepest)?,
            }],
            BufferKind::P2s | BufferKind::O2s => {
                let per = self.rs_capacity / self.q.len();
                self.q
                    .iter()
                    .map(|&q| {
                        Ok(LayerSpec {
                            capacity: per,
                            design: CounterDesign::new(self.counter, q)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        if layers.iter().any(|l| l.capacity == 0) {
            return Err(Error::Config("every reservoir layer needs a positive capacity".into()));
        }
        Ok(layers)
    }

    pub fn learner_config(&self) -> Result<LearnerConfig> {
        let mechanisms = self.method.mechanisms();
        let (alpha_init, beta_init) = if self.method == Method::Der {
            (1.0, 0.5)
        } else {
            (self.alpha_init, self.beta_init)
        };
        Ok(LearnerConfig {
            fifo_capacity: self.fifo_capacity,
            layers: self.layers()?,
            zeta: if self.buffer == BufferKind::O2s { self.zeta } else { 0.0 },
            batch_size: self.batch_size,
            alpha_init,
            beta_init,
            rho: self.rho,
            lambda: self.lambda,
            lr_mult: self.lr_mult,
            learning_rate: self.learning_rate,
            hidden: self.hidden.clone(),
            mechanisms,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.seeds == 0 {
            return Err(Error::Config("seed count must be positive".into()));
        }
        let cfg = self.learner_config()?;
        crate::buffers::PluralStack::new(&cfg.layers, cfg.zeta)?;
        crate::trainer::AdaptiveWeights::new(cfg.alpha_init, cfg.beta_init, cfg.rho, cfg.lambda, cfg.lr_mult)?;
        Ok(())
    }

    /// Run seed of the `index`-th repetition.
    pub fn seed(&self, index: usize) -> u64 {
        self.root_seed.wrapping_add(index as u64)
    }
}

/// Multiplier and loss state after one training session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub session: u64,
    /// Stream points seen so far.
    pub seen: u64,
    pub loss_fifo: f64,
    pub loss_rs: f64,
    pub reg_mean: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta_q: f64,
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub score: Score,
    pub series: Vec<SessionRow>,
    /// Offers that the omission strategy dropped, per layer.
    pub omitted: Vec<u64>,
}

const STREAM_TAG: u64 = 1;
const LEARNER_TAG: u64 = 2;

fn tagged_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Trains one learner on the task stream and scores it.
pub fn run_single(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    train(config, seed).map(|(result, _)| result)
}

/// As [`run_single`], also returning the trained learner.
pub fn train(config: &ExperimentConfig, seed: u64) -> Result<(RunResult, Learner)> {
    let learner_cfg = config.learner_config()?;
    let schedule = config.schedule;
    schedule.validate()?;
    let stream_seed = {
        use rand::RngCore;
        tagged_rng(seed, STREAM_TAG).next_u64()
    };
    let stream = config.task.stream(schedule.cycles, stream_seed);
    let mut rng = tagged_rng(seed, LEARNER_TAG);
    let mut learner = Learner::new(&learner_cfg, config.task.head(), config.task.input_dim(), &mut rng)?;

    let switch_at = match config.task {
        TaskSpec::Switched { .. } => Some(schedule.cycles * config.task.cycle_len()),
        _ => None,
    };
    let mut first_at_switch = None;
    let mut series = Vec::with_capacity(stream.len() / schedule.train_every + 1);
    for (i, sample) in stream.into_iter().enumerate() {
        if Some(i) == switch_at {
            if let TaskSpec::Switched { first, .. } = &config.task {
                first_at_switch = Some(first.eval_acc(learner.model())?);
            }
        }
        learner.observe(sample.x, sample.y, &mut rng)?;
        let seen = i as u64 + 1;
        if seen.is_multiple_of(schedule.train_every as u64) {
            if let Some(r) = learner.train_session(schedule.updates_per_session, &mut rng)? {
                series.push(SessionRow {
                    session: series.len() as u64,
                    seen,
                    loss_fifo: r.loss_fifo,
                    loss_rs: r.loss_rs,
                    reg_mean: r.reg_mean,
                    alpha: r.alpha,
                    beta: r.beta,
                    delta_q: r.delta_q,
                });
            }
        }
    }

    let mut score = config.task.evaluate(learner.model())?;
    if let (Score::SwitchedAcc { first, .. }, Some(a)) = (&mut score, first_at_switch) {
        *first = a;
    }
    let result = RunResult {
        seed,
        score,
        series,
        omitted: learner.stack().stats().omitted.clone(),
    };
    Ok((result, learner))
}

/// Mean with weights `S - rank + 1`, where rank 1 is the worst of `S` values.
pub fn rank_weighted_mean(values: &[f64], lower_is_better: bool) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    // Worst first.
    if lower_is_better {
        sorted.sort_by(|a, b| b.total_cmp(a));
    } else {
        sorted.sort_by(|a, b| a.total_cmp(b));
    }
    let s = sorted.len();
    let (num, den) = sorted
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(num, den), (i, &v)| {
            let w = (s - i) as f64;
            (num + w * v, den + w)
        });
    num / den
}

/// Per-seed results and their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub runs: Vec<RunResult>,
    pub mean: f64,
    pub rank_weighted: f64,
    pub lower_is_better: bool,
    /// Seeds with both switched-stream accuracies at or above the balance level.
    pub balanced: usize,
}

/// Accuracy both halves of a switched stream must reach to count as balanced.
pub const BALANCE_LEVEL: f64 = 90.0;

impl ExperimentSummary {
    pub fn from_runs(runs: Vec<RunResult>, balance_level: f64) -> Self {
        let values: Vec<f64> = runs.iter().map(|r| r.score.value()).collect();
        let lower_is_better = runs.first().is_some_and(|r| r.score.lower_is_better());
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        Self {
            rank_weighted: rank_weighted_mean(&values, lower_is_better),
            mean,
            lower_is_better,
            balanced: runs.iter().filter(|r| r.score.balanced(balance_level)).count(),
            runs,
        }
    }

    /// Mean of one switched-stream half over seeds (`None` for other tasks).
    pub fn mean_half(&self, second: bool) -> Option<f64> {
        let halves: Option<Vec<f64>> = self
            .runs
            .iter()
            .map(|r| match r.score {
                Score::SwitchedAcc { first, second: s, .. } => Some(if second { s } else { first }),
                _ => None,
            })
            .collect();
        halves.map(|h| h.iter().sum::<f64>() / h.len().max(1) as f64)
    }
}

/// Runs `config.seeds` seeds in order and aggregates them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    run_experiment_with(config, BALANCE_LEVEL, |_| {})
}

/// As [`run_experiment`], with a balance level and a per-seed callback.
pub fn run_experiment_with<F>(
    config: &ExperimentConfig,
    balance_level: f64,
    mut on_run: F,
) -> Result<ExperimentSummary>
where
    F: FnMut(&RunResult),
{
    config.validate()?;
    let runs = (0..config.seeds)
        .map(|i| {
            let r = run_single(config, config.seed(i))?;
            on_run(&r);
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentSummary::from_runs(runs, balance_level))
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepAxis {
    Rho(Vec<f64>),
    /// Single-reservoir balance `q` of the given counter family.
    Q { counter: CounterKind, values: Vec<f64> },
    /// Each counter family over its own `q` grid of `points` values.
    Design { points: usize },
}

impl SweepAxis {
    pub fn default_rho() -> Self {
        SweepAxis::Rho(vec![0.25, 0.5, 0.75])
    }
}

/// `points` evenly spaced legal `q` values of a counter family:
/// `[0, 2]` for q-log, `[0, 1)` for linear, `(0, 1]` for exponential.
pub fn q_grid(counter: CounterKind, points: usize) -> Vec<f64> {
    let p = points.max(1);
    match counter {
        CounterKind::QLog if p == 1 => vec![1.0],
        CounterKind::QLog => (0..p).map(|i| 2.0 * i as f64 / (p - 1) as f64).collect(),
        CounterKind::Linear => (0..p).map(|i| i as f64 / p as f64).collect(),
        CounterKind::Exp => (1..=p).map(|i| i as f64 / p as f64).collect(),
    }
}

/// One sweep value and its aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub counter: Option<CounterKind>,
    pub value: f64,
    pub summary: ExperimentSummary,
}

/// Configurations visited by a sweep, in order.
pub fn sweep_points(base: &ExperimentConfig, axis: &SweepAxis) -> Vec<(String, Option<CounterKind>, f64, ExperimentConfig)> {
    let single_q = |counter: CounterKind, q: f64| {
        let mut c = base.clone();
        c.buffer = BufferKind::Q2s;
        c.counter = counter;
        c.q = vec![q];
        c
    };
    match axis {
        SweepAxis::Rho(values) => values
            .iter()
            .map(|&rho| {
                let mut c = base.clone();
                c.rho = rho;
                ("rho".to_string(), None, rho, c)
            })
            .collect(),
        SweepAxis::Q { counter, values } => values
            .iter()
            .map(|&q| ("q".to_string(), Some(*counter), q, single_q(*counter, q)))
            .collect(),
        SweepAxis::Design { points } => [CounterKind::Linear, CounterKind::Exp, CounterKind::QLog]
            .into_iter()
            .flat_map(|k| q_grid(k, *points).into_iter().map(move |q| (k, q)))
            .map(|(k, q)| ("design".to_string(), Some(k), q, single_q(k, q)))
            .collect(),
    }
}

/// Runs every sweep point; `on_row` sees each finished row.
pub fn run_sweep<F>(
    base: &ExperimentConfig,
    axis: &SweepAxis,
    balance_level: f64,
    mut on_row: F,
) -> Result<Vec<SweepRow>>
where
    F: FnMut(&SweepRow),
{
    sweep_points(base, axis)
        .into_iter()
        .map(|(axis, counter, value, cfg)| {
            let row = SweepRow {
                axis,
                counter,
                value,
                summary: run_experiment_with(&cfg, balance_level, |_| {})?,
            };
            on_row(&row);
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(task: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::for_task(task).unwrap();
        c.schedule.cycles = 1;
        c.schedule.updates_per_session = 2;
        c.fifo_capacity = 64;
        c.rs_capacity = 64;
        c.batch_size = 8;
        c.hidden = vec![8];
        c.seeds = 2;
        c
    }

    #[test]
    fn rank_weighting() {
        // Higher is better: worst (1) gets weight 3.
        let v = [3.0, 1.0, 2.0];
        assert!((rank_weighted_mean(&v, false) - (3.0 + 4.0 + 3.0) / 6.0).abs() < 1e-12);
        // Lower is better: worst (3) gets weight 3.
        assert!((rank_weighted_mean(&v, true) - (9.0 + 4.0 + 1.0) / 6.0).abs() < 1e-12);
        assert_eq!(rank_weighted_mean(&[5.0], true), 5.0);
        assert!(rank_weighted_mean(&[], true).is_nan());
    }

    #[test]
    fn buffer_layouts() {
        let mut c = ExperimentConfig::for_task("c1").unwrap();
        assert_eq!(c.layers().unwrap()[0].design, CounterDesign::classic());
        c.buffer = BufferKind::Q2s;
        let l = c.layers().unwrap();
        assert_eq!((l.len(), l[0].capacity, l[0].design.q), (1, 512, 1.0));
        c.buffer = BufferKind::P2s;
        let l = c.layers().unwrap();
        assert_eq!((l.len(), l[0].capacity, l[0].design.q, l[1].design.q), (2, 256, 1.5, 1.0));
        assert_eq!(c.learner_config().unwrap().zeta, 0.0);
        c.buffer = BufferKind::O2s;
        assert_eq!(c.learner_config().unwrap().zeta, 0.2);
        for b in BufferKind::ALL {
            assert_eq!(b.label().parse::<BufferKind>().unwrap(), b);
        }
    }

    #[test]
    fn der_uses_fixed_defaults() {
        let mut c = ExperimentConfig::for_task("r1").unwrap();
        c.method = Method::Der;
        c.alpha_init = 3.0;
        let l = c.learner_config().unwrap();
        assert_eq!((l.alpha_init, l.beta_init), (1.0, 0.5));
    }

    #[test]
    fn q_grids_stay_legal() {
        for k in [CounterKind::QLog, CounterKind::Linear, CounterKind::Exp] {
            let g = q_grid(k, 21);
            assert_eq!(g.len(), 21);
            for q in g {
                CounterDesign::new(k, q).unwrap();
            }
        }
        let g = q_grid(CounterKind::QLog, 21);
        assert!((g[10] - 1.0).abs() < 1e-12 && (g[9] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn runs_are_reproducible() {
        let c = tiny("r1");
        let a = run_single(&c, 4).unwrap();
        let b = run_single(&c, 4).unwrap();
        assert_eq!(a, b);
        assert!(!a.series.is_empty());
        assert_ne!(run_single(&c, 5).unwrap().score, a.score);
    }

    #[test]
    fn experiment_aggregates_every_seed() {
        let mut c = tiny("c4");
        c.buffer = BufferKind::O2s;
        let s = run_experiment(&c).unwrap();
        assert_eq!(s.runs.len(), 2);
        assert!(!s.lower_is_better);
        assert!(s.runs.iter().all(|r| (0.0..=100.0).contains(&r.score.value())));
    }

    #[test]
    fn switched_scores_both_halves() {
        let c = tiny("switched");
        let r = run_single(&c, 0).unwrap();
        assert!(matches!(r.score, Score::SwitchedAcc { .. }));
    }

    #[test]
    fn sweep_enumeration() {
        let c = tiny("c1");
        assert_eq!(sweep_points(&c, &SweepAxis::default_rho()).len(), 3);
        let pts = sweep_points(&c, &SweepAxis::Design { points: 5 });
        assert_eq!(pts.len(), 15);
        assert!(pts.iter().all(|p| p.3.buffer == BufferKind::Q2s));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = tiny("c1");
        c.seeds = 0;
        assert!(c.validate().is_err());
        let mut c = tiny("c1");
        c.buffer = BufferKind::P2s;
        c.q = vec![1.0, 1.5];
        assert!(c.validate().is_err());
        let mut c = tiny("c1");
        c.rho = 0.0;
        assert!(c.validate().is_err());
    }
}
