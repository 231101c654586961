//! `spadsim`: simulation, characterization, key-rate and hardware-budget runs
//! driven by one JSON config.
//!
//! Exit codes: 0 success, 1 config or usage error, 2 runtime or I/O error,
//! 3 hardware budget exceeded. The last stdout line of every run starts with
//! `RESULT `.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Context, Report};
use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "spadsim", version, about = "Gated single-photon detector simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed(s).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "SPADSIM_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize frames, ground truth and compensator decisions.
    Simulate(Common),
    /// Sweep the discrimination level and write the efficiency/dark-count curve.
    Sweep(Common),
    /// Key-rate table and dark-count gain curve.
    Keyrate(Common),
    /// RF bandwidth and thermal budget check.
    Hwcheck(Common),
    /// Compensator throughput on pre-generated frames.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Timed repetitions (at least 5).
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Keyrate(_) => "keyrate",
            Command::Hwcheck(_) => "hwcheck",
            Command::Bench { .. } => "bench",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::Sweep(c) | Command::Keyrate(c) | Command::Hwcheck(c) => c,
            Command::Bench { common, .. } => common,
        }
    }
}

fn execute(command: &Command) -> Result<Report, CliError> {
    let common = command.common();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.override_seed(seed);
    }
    match config.output.format {
        config::OutputFormat::Csv => {}
    }
    let out_dir = common.out.clone().or_else(|| config.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context { config, out_dir };
    match command {
        Command::Simulate(_) => commands::simulate::run(&ctx),
        Command::Sweep(_) => commands::sweep::run(&ctx),
        Command::Keyrate(_) => commands::keyrate::run(&ctx),
        Command::Hwcheck(_) => commands::hwcheck::run(&ctx),
        Command::Bench { trials, .. } => commands::bench::run(&ctx, *trials),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let name = cli.command.name();
    let failure = match execute(&cli.command) {
        Ok(report) => {
            println!("RESULT {}", report.summary);
            report.failure
        }
        Err(e) => {
            println!("RESULT {name} status=error exit={}", e.exit_code());
            Some(e)
        }
    };
    match failure {
        None => ExitCode::SUCCESS,
        Some(e) => {
            eprintln!("spadsim {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
