mod args;
mod commands;
mod config;
mod manifest;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use fraclab_core::FracError;

use args::{Cli, Command};
use config::{FileConfig, RunConfig, VerifyConfig};
use manifest::{versions, Manifest};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config, violated hypotheses: exit 2.
    Usage(String),
    /// Solver or I/O failure: exit 1.
    Runtime(String),
}

impl From<FracError> for CliError {
    fn from(e: FracError) -> Self {
        match e {
            FracError::InvalidArgument(_)
            | FracError::Domain(_)
            | FracError::Hypothesis(_)
            | FracError::UnderResolved { .. }
            | FracError::Resolution(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn set_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let argv: Vec<String> = std::env::args().collect();
    let name = cli.command.name();
    let start = Instant::now();
    match &cli.command {
        Command::VerifyAll(flags) => {
            let cfg = VerifyConfig::resolve(flags, file, cli.jobs);
            set_jobs(cfg.jobs)?;
            let outcome = commands::verify_all(&cfg)?;
            let manifest = Manifest {
                command: name,
                argv,
                config: &cfg,
                versions: versions(),
                seed: 0,
                wall_time_seconds: start.elapsed().as_secs_f64(),
                outputs: outcome.outputs,
                columns: outcome.columns.iter().enumerate().map(|(i, c)| (i + 1, *c)).collect(),
                summary: outcome.summary,
            };
            manifest.write(&cfg.out)?;
            Ok(!outcome.failed)
        }
        Command::Spectrum(flags)
        | Command::Sweep(flags)
        | Command::Poincare(flags)
        | Command::Oscillation(flags)
        | Command::BoundaryLayer(flags)
        | Command::Weyl(flags) => {
            let cfg = RunConfig::resolve(name, flags, file, cli.jobs);
            cfg.validate(name)?;
            set_jobs(cfg.jobs)?;
            let outcome = match &cli.command {
                Command::Spectrum(_) => commands::spectrum(&cfg)?,
                Command::Sweep(_) => commands::sweep_cmd(&cfg)?,
                Command::Poincare(_) => commands::poincare(&cfg)?,
                Command::Oscillation(_) => commands::oscillation(&cfg)?,
                Command::BoundaryLayer(_) => commands::boundary_layer(&cfg)?,
                _ => commands::weyl(&cfg)?,
            };
            let manifest = Manifest {
                command: name,
                argv,
                config: &cfg,
                versions: versions(),
                seed: cfg.seed,
                wall_time_seconds: start.elapsed().as_secs_f64(),
                outputs: outcome.outputs,
                columns: outcome.columns.iter().enumerate().map(|(i, c)| (i + 1, *c)).collect(),
                summary: outcome.summary,
            };
            let path = manifest.write(&cfg.out)?;
            log::info!("manifest written to {}", path.display());
            Ok(!outcome.failed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
