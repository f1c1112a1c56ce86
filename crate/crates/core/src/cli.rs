//! Command implementations behind the `beacon-sync` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::eval::{compute_report, read_records, write_records, EvalError, MetricsReport};
use crate::sim::{run_batch, ScenarioFile, SimError};
use crate::store::{server::StoreServer, AnchorStore, StoreError};

#[derive(Debug, Parser)]
#[command(name = "beacon-sync", version, about = "Shared AR anchor simulation and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the trial batch described by a scenario config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's trial count.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Aggregate a trial CSV into metrics.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Where to write the metrics CSV; printed after the table if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve an anchor store over TCP (JSON lines).
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Snapshot file, loaded at startup and rewritten after each mutation.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Schema(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Schema(_) => 4,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn eval_error(path: &Path, e: EvalError) -> CliError {
    match e {
        EvalError::Io(e) => CliError::io(path, e),
        other => CliError::Schema(format!("{}: {other}", path.display())),
    }
}

/// Runs a batch and writes its rows. Returns the number of rows.
pub fn run(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    trials: Option<u64>,
) -> Result<usize, CliError> {
    let text = std::fs::read_to_string(config).map_err(|e| CliError::io(config, e))?;
    let mut file = ScenarioFile::parse(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    if let Some(trials) = trials {
        if trials == 0 {
            return Err(CliError::Config("--trials: must be >= 1".into()));
        }
        file.trials = trials;
    }
    let scenario = file.scenario()?;
    let rows = run_batch(
        file.approach,
        &scenario,
        &file.environment_levels,
        file.trials,
        file.devices,
        file.seed,
    )?;
    let f = File::create(out).map_err(|e| CliError::io(out, e))?;
    let mut w = BufWriter::new(f);
    write_records(&mut w, &rows).map_err(|e| eval_error(out, e))?;
    w.flush().map_err(|e| CliError::io(out, e))?;
    Ok(rows.len())
}

pub fn report(input: &Path) -> Result<MetricsReport, CliError> {
    let f = File::open(input).map_err(|e| CliError::io(input, e))?;
    let rows = read_records(f).map_err(|e| eval_error(input, e))?;
    Ok(compute_report(&rows))
}

pub fn serve(addr: &str, snapshot: Option<PathBuf>) -> Result<(), CliError> {
    let store = match &snapshot {
        Some(path) if path.exists() => AnchorStore::load(path).map_err(|e| match e {
            StoreError::Io(_) => CliError::io(path, e),
            other => CliError::Schema(format!("{}: {other}", path.display())),
        })?,
        _ => AnchorStore::new(),
    };
    let listener = TcpListener::bind(addr).map_err(|e| CliError::Io(format!("{addr}: {e}")))?;
    let local = listener
        .local_addr()
        .map_err(|e| CliError::Io(format!("{addr}: {e}")))?;
    eprintln!("anchor store listening on {local}");
    StoreServer::new(Arc::new(store), snapshot)
        .serve(listener)
        .map_err(|e| CliError::Io(format!("{local}: {e}")))
}

/// Executes a parsed command line and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            trials,
        } => run(&config, &out, seed, trials).map(|n| {
            eprintln!("wrote {n} trial rows to {}", out.display());
        }),
        Command::Report { input, out } => report(&input).and_then(|rep| {
            // a closed stdout (e.g. piped into `head`) is not an error
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(rep.to_table().as_bytes());
            match out {
                Some(path) => std::fs::write(&path, rep.to_csv()).map_err(|e| CliError::io(&path, e)),
                None => {
                    let _ = write!(stdout, "\n{}", rep.to_csv());
                    Ok(())
                }
            }
        }),
        Command::Serve { addr, snapshot } => serve(&addr, snapshot),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
