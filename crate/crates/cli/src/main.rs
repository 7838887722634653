use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stein_cli::config::read_config_file;
use stein_cli::{experiments, output, Experiment, Format, RunError, SweepConfig};

/// Certified Stein-method bounds: invariant suites, sweeps and demos.
#[derive(Parser)]
#[command(name = "stein", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every invariant suite; exits 0 only if all pass.
    Verify(Flags),
    /// Independent-indicator Poisson bound against the exact distance.
    PoissonSweep(Flags),
    /// Kolmogorov distance, pair bound and concentration bound for sign sums.
    NormalDemo(Flags),
    /// Exchangeable-pair Kolmogorov bound for coordinate resampling.
    PairDemo(Flags),
    /// Poisson process bound against the exact process distance.
    ProcessDemo(Flags),
    /// Concentration inequality against exact window probabilities.
    ConcentrationDemo(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// Comma-separated list of n values.
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated list of probabilities.
    #[arg(long)]
    p: Option<String>,
    /// Comma-separated list of Poisson rates.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Poisson tail tolerance, in (0, 1e-6].
    #[arg(long)]
    truncation_eps: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// key = value or JSON file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Multiply every bound before certification (diagnostic).
    #[arg(long)]
    bound_scale: Option<f64>,
}

impl Command {
    fn split(self) -> (Experiment, Flags) {
        match self {
            Command::Verify(f) => (Experiment::Verify, f),
            Command::PoissonSweep(f) => (Experiment::PoissonSweep, f),
            Command::NormalDemo(f) => (Experiment::NormalDemo, f),
            Command::PairDemo(f) => (Experiment::PairDemo, f),
            Command::ProcessDemo(f) => (Experiment::ProcessDemo, f),
            Command::ConcentrationDemo(f) => (Experiment::ConcentrationDemo, f),
        }
    }
}

fn build_config(experiment: Experiment, flags: Flags) -> Result<SweepConfig, RunError> {
    let mut cfg = SweepConfig::defaults(experiment);
    if let Some(path) = &flags.config {
        for (k, v) in read_config_file(path)? {
            cfg.apply(&k, &v)?;
        }
    }
    for (key, value) in [("n", flags.n), ("p", flags.p), ("lambda", flags.lambda)] {
        if let Some(v) = value {
            cfg.apply(key, &v)?;
        }
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.truncation_eps {
        cfg.truncation_eps = v;
    }
    if let Some(v) = flags.format {
        cfg.format = v;
    }
    if let Some(v) = flags.out {
        cfg.out = Some(v);
    }
    if let Some(v) = flags.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = flags.bound_scale {
        cfg.bound_scale = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), RunError> {
    let (experiment, flags) = cli.command.split();
    let cfg = build_config(experiment, flags)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| RunError::Resource(e.to_string()))?;
    let table = pool.install(|| experiments::run(&cfg));
    output::emit(&table, &cfg)?;

    let alarms = table.alarms();
    if alarms > 0 {
        return Err(RunError::Certification(format!("{alarms} row(s) failed")));
    }
    let skipped: Vec<_> = table.skipped().collect();
    if let Some(s) = skipped.iter().find(|s| s.resource) {
        return Err(RunError::Resource(format!("{} row(s) skipped, e.g. {}", skipped.len(), s.reason)));
    }
    if let Some(s) = skipped.first() {
        return Err(RunError::Config(stein_cli::ConfigError(format!(
            "{} row(s) skipped, e.g. {}",
            skipped.len(),
            s.reason
        ))));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stein: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
