use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use replay_core::buffers::{CounterDesign, CounterKind};
use replay_core::experiment::{self, q_grid, SweepAxis};
use replay_core::probe;
use replay_cli::config::Settings;
use replay_cli::{output, CliError, CliResult};

#[derive(Parser)]
#[command(name = "replay", version, about = "Continual-learning replay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one condition over several seeds.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat a condition along one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Explicit sweep values (rho or q axes).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Grid size per counter family (q and design axes).
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
    /// Tabulate reservoir acceptance or simulate token retention.
    Probe(ProbeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Rho,
    Q,
    Design,
}

#[derive(Args)]
struct Common {
    /// Flat TOML file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    buffer: Option<String>,
    /// Task preset: r1..r4, c1..c4 or switched.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    root_seed: Option<u64>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Counter family: qlog, lin or exp.
    #[arg(long)]
    counter: Option<String>,
    /// Balance per reservoir layer, comma separated.
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    balance_level: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip the per-seed time series.
    #[arg(long)]
    no_series: bool,
}

impl Common {
    fn settings(&self) -> CliResult<Settings> {
        let base = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        Ok(base.merged(Settings {
            task: self.task.clone(),
            method: self.method.clone(),
            buffer: self.buffer.clone(),
            seeds: self.seeds,
            root_seed: self.root_seed,
            cycles: self.cycles,
            rho: self.rho,
            counter: self.counter.clone(),
            q: self.q.clone(),
            zeta: self.zeta,
            balance_level: self.balance_level,
            ..Settings::default()
        }))
    }
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, default_value = "qlog")]
    design: String,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 512)]
    capacity: usize,
    /// Largest offer count of the acceptance curve.
    #[arg(long, default_value_t = 100_000)]
    max_offers: u64,
    #[arg(long, default_value_t = 100)]
    stride: u64,
    /// Simulate this many independent runs and report per-token retention.
    #[arg(long)]
    trials: Option<u64>,
    /// Offers per simulated run.
    #[arg(long, default_value_t = 1000)]
    offers: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file.
    #[arg(long, default_value = "probe.csv")]
    out: PathBuf,
}

fn run(common: &Common) -> CliResult<()> {
    let settings = common.settings()?;
    let config = settings.build()?;
    output::write_config(&common.out, &config)?;
    let summary = experiment::run_experiment_with(&config, settings.balance_level(), |r| {
        eprintln!("seed {}: {:.4}", r.seed, r.score.value());
        if !common.no_series {
            if let Err(e) = output::write_series(&common.out, r) {
                eprintln!("warning: {e}");
            }
        }
    })?;
    output::write_summary(&common.out, &config, &summary)?;
    println!(
        "{} {} {}: mean {:.4}, rank-weighted {:.4} over {} seeds",
        config.task_name,
        config.method,
        config.buffer,
        summary.mean,
        summary.rank_weighted,
        summary.runs.len()
    );
    Ok(())
}

fn sweep(common: &Common, axis: Axis, values: Option<Vec<f64>>, points: usize) -> CliResult<()> {
    let settings = common.settings()?;
    let config = settings.build()?;
    let axis = match axis {
        Axis::Rho => values.map(SweepAxis::Rho).unwrap_or_else(SweepAxis::default_rho),
        Axis::Q => SweepAxis::Q {
            counter: config.counter,
            values: values.unwrap_or_else(|| q_grid(config.counter, points)),
        },
        Axis::Design => {
            if values.is_some() {
                return Err(CliError::Usage("--values does not apply to the design axis".into()));
            }
            SweepAxis::Design { points }
        }
    };
    output::write_config(&common.out, &config)?;
    let rows = experiment::run_sweep(&config, &axis, settings.balance_level(), |row| {
        eprintln!(
            "{} {:?} {}: mean {:.4}, balanced {}",
            row.axis, row.counter, row.value, row.summary.mean, row.summary.balanced
        );
    })?;
    output::write_sweep(&common.out, &rows)?;
    Ok(())
}

fn probe_cmd(args: &ProbeArgs) -> CliResult<()> {
    let design = CounterDesign::new(args.design.parse::<CounterKind>()?, args.q)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    match args.trials {
        Some(trials) => {
            let profile = probe::membership_profile(&design, args.capacity, args.offers, trials, args.seed)?;
            let worst = profile.iter().map(|p| p.z_score.abs()).fold(0.0, f64::max);
            output::write_profile(&args.out, &profile)?;
            println!("{} tokens, max |z| = {worst:.3}", profile.len());
        }
        None => {
            let curve = probe::acceptance_curve(&design, args.capacity, args.max_offers, args.stride);
            output::write_curve(&args.out, &curve)?;
            if let Some(last) = curve.last() {
                println!("acceptance at n = {}: {:.6}", last.n, last.acceptance);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common } => run(common),
        Command::Sweep {
            common,
            axis,
            values,
            points,
        } => sweep(common, *axis, values.clone(), *points),
        Command::Probe(args) => probe_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
