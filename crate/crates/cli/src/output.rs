//! CSV and JSON writers for run directories.

use std::fs;
use std::path::Path;

use replay_core::experiment::{ExperimentSummary, RunResult, SweepRow};
use replay_core::probe::{CurvePoint, ProbeResult};
use replay_core::{ExperimentConfig, Score};
use serde::Serialize;

use crate::CliResult;

/// Aggregation rule, echoed into the summary files.
pub const WEIGHTING: &str = "rank-weighted: weight S-rank+1, rank 1 = worst of S seeds";

/// Pretty JSON echo of the resolved configuration.
pub fn write_config(dir: &Path, config: &ExperimentConfig) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    Ok(())
}

/// Per-session time series of one seed.
pub fn write_series(dir: &Path, run: &RunResult) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(format!("seed_{}.csv", run.seed)))?;
    for row in &run.series {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SeedRow {
    seed: u64,
    metric: &'static str,
    value: f64,
    first_half: Option<f64>,
    second_half: Option<f64>,
    first_half_final: Option<f64>,
}

fn seed_row(run: &RunResult) -> SeedRow {
    let (metric, first, second, first_final) = match run.score {
        Score::Kld(_) => ("kld", None, None, None),
        Score::Acc(_) => ("acc", None, None, None),
        Score::SwitchedAcc {
            first,
            second,
            first_final,
        } => ("acc_switched", Some(first), Some(second), Some(first_final)),
    };
    SeedRow {
        seed: run.seed,
        metric,
        value: run.score.value(),
        first_half: first,
        second_half: second,
        first_half_final: first_final,
    }
}

#[derive(Serialize)]
struct AggregateRow<'a> {
    task: &'a str,
    method: String,
    buffer: String,
    seeds: usize,
    mean: f64,
    rank_weighted: f64,
    balanced: usize,
    weighting: &'static str,
}

/// `summary.csv` (one row per seed) and `aggregate.csv` (one row).
pub fn write_summary(dir: &Path, config: &ExperimentConfig, summary: &ExperimentSummary) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for run in &summary.runs {
        w.serialize(seed_row(run))?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("aggregate.csv"))?;
    w.serialize(AggregateRow {
        task: &config.task_name,
        method: config.method.to_string(),
        buffer: config.buffer.to_string(),
        seeds: summary.runs.len(),
        mean: summary.mean,
        rank_weighted: summary.rank_weighted,
        balanced: summary.balanced,
        weighting: WEIGHTING,
    })?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SweepCsvRow<'a> {
    axis: &'a str,
    counter: String,
    value: f64,
    seeds: usize,
    mean: f64,
    rank_weighted: f64,
    first_half_mean: Option<f64>,
    second_half_mean: Option<f64>,
    balanced: usize,
    weighting: &'static str,
}

/// `sweep.csv` (one row per sweep value) and `sweep_seeds.csv` (one row per seed).
pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let counter = |r: &SweepRow| r.counter.map(|k| format!("{k:?}").to_lowercase()).unwrap_or_default();
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    for r in rows {
        w.serialize(SweepCsvRow {
            axis: &r.axis,
            counter: counter(r),
            value: r.value,
            seeds: r.summary.runs.len(),
            mean: r.summary.mean,
            rank_weighted: r.summary.rank_weighted,
            first_half_mean: r.summary.mean_half(false),
            second_half_mean: r.summary.mean_half(true),
            balanced: r.summary.balanced,
            weighting: WEIGHTING,
        })?;
    }
    w.flush()?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join("sweep_seeds.csv"))?;
    w.write_record([
        "axis", "counter", "sweep_value", "seed", "metric", "value", "first_half", "second_half",
        "first_half_final",
    ])?;
    for r in rows {
        for run in &r.summary.runs {
            let s = seed_row(run);
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.axis.clone(),
                counter(r),
                r.value.to_string(),
                s.seed.to_string(),
                s.metric.to_string(),
                s.value.to_string(),
                opt(s.first_half),
                opt(s.second_half),
                opt(s.first_half_final),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ProfileRow {
    token: usize,
    empirical: f64,
    analytic: f64,
    trials: u64,
    z_score: f64,
}

/// One row per token, 1-based.
pub fn write_profile(path: &Path, profile: &[ProbeResult]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, p) in profile.iter().enumerate() {
        w.serialize(ProfileRow {
            token: i + 1,
            empirical: p.empirical,
            analytic: p.analytic,
            trials: p.trials,
            z_score: p.z_score,
        })?;
    }
    w.flush()?;
    Ok(())
}
