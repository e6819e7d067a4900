use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sdde_cli::commands::{run_check, run_converge, run_simulate, run_stability_table};
use sdde_cli::config::{parse_list, ProblemSpec};
use sdde_cli::{Experiment, ExperimentConfig, Outcome, Status};
use sdde_core::{Result, SddeError};

#[derive(Parser)]
#[command(name = "sdde", version, about = "Truncated Euler-Maruyama experiments for stochastic delay equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write `t,y_1..` CSV.
    Simulate(Common),
    /// Strong-error sweep against a fine reference path.
    Converge(Common),
    /// Decay rates for a list of step sizes.
    StabilityTable(Common),
    /// Sampled hypothesis checks; exits 1 on any violation.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Built-in problem name.
    #[arg(long)]
    problem: Option<String>,
    /// full | partial
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Constant initial value.
    #[arg(long)]
    initial: Option<f64>,
    /// Comma-separated step sizes for `converge`.
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    reference_step: Option<f64>,
    /// Comma-separated step sizes for `stability-table`.
    #[arg(long)]
    delta_list: Option<String>,
}

impl Common {
    fn manifest(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.problem {
            cfg.problem = Some(ProblemSpec::Builtin(p.clone()));
        }
        if let Some(m) = &self.mode {
            cfg.mode = Some(m.clone());
        }
        if self.initial.is_some() {
            cfg.initial = self.initial;
        }
        let s = &mut cfg.solver;
        s.seed = self.seed.or(s.seed);
        s.step = self.step.or(s.step);
        s.horizon = self.horizon.or(s.horizon);
        s.n_paths = self.paths.or(s.n_paths);
        s.record_stride = self.stride.or(s.record_stride);
        if let Some(list) = &self.steps {
            cfg.converge.steps = Some(parse_list(list)?);
        }
        cfg.converge.reference_step = self.reference_step.or(cfg.converge.reference_step);
        if let Some(list) = &self.delta_list {
            cfg.stability.delta_list = Some(parse_list(list)?);
        }
        Ok(cfg)
    }
}

fn run(command: &Command) -> Result<Outcome> {
    let (common, f): (&Common, fn(&Experiment, &mut dyn Write) -> Result<Outcome>) = match command {
        Command::Simulate(c) => (c, |e, w| run_simulate(e, w)),
        Command::Converge(c) => (c, |e, w| run_converge(e, w)),
        Command::StabilityTable(c) => (c, |e, w| run_stability_table(e, w)),
        Command::Check(c) => (c, |e, w| run_check(e, w)),
    };
    let experiment = Experiment::resolve(&common.manifest()?)?;
    let pool = match common.workers {
        Some(0) => return Err(SddeError::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| SddeError::Config(format!("cannot start worker pool: {e}")))?;

    // Results are buffered so a failed run never leaves a partial file behind.
    let mut buf = Vec::new();
    let outcome = pool.install(|| f(&experiment, &mut buf))?;
    match &common.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(&buf)?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(&buf)?,
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match run(&cli.command) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            outcome.status
        }
        Err(e) => {
            eprintln!("error: {e}");
            Status::of_error(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}
