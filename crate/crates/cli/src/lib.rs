//! Command-line front end for `qthermostat`: config parsing, experiment
//! sweeps, the validation suite and CSV/JSON output.

pub mod commands;
pub mod config;
pub mod output;
pub mod validate;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{ExperimentConfig, Format};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("validation failed")]
    ValidationFailed,
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ValidationFailed => 1,
            Self::Config(_) | Self::Io(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "qthermostat", version, about = "Quantum collisional thermostat simulations")]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 for all cores); overrides `run.threads`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; overrides `output.path`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `output.format`.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition probability for one channel pair over a kinetic-energy or momentum sweep.
    TransitionProb,
    /// Stationary ground-state population of the system over a temperature sweep.
    Thermalize,
    /// Entropy production per collision over a sweep of the kinetic temperature.
    Entropy,
    /// Run the invariant suite on the configured model.
    Validate,
    /// Dump transmission and reflection amplitudes.
    Amplitudes {
        /// Total energy.
        #[arg(long, conflicts_with = "p0")]
        energy: Option<f64>,
        /// Incident momentum (momentum-dependent providers).
        #[arg(long)]
        p0: Option<f64>,
        /// Incident channel label, used with `--p0`.
        #[arg(long, requires = "p0")]
        incident: Option<String>,
    },
}

/// Loads the config and applies command-line overrides.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.run.threads = t;
    }
    if let Some(out) = &cli.out {
        cfg.output.path = Some(out.to_string_lossy().into_owned());
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    Ok(cfg)
}

fn sink(cfg: &ExperimentConfig) -> Result<Box<dyn Write>, CliError> {
    Ok(match &cfg.output.path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("cannot create {p}: {e}")))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Runs one subcommand against an already loaded config.
pub fn execute(command: &Command, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let format = cfg.output.format;
    match command {
        Command::TransitionProb => {
            let t = commands::transition_prob(cfg)?;
            output::write_table(&t, format, sink(cfg)?)
        }
        Command::Thermalize => {
            let t = commands::thermalize(cfg)?;
            output::write_table(&t, format, sink(cfg)?)
        }
        Command::Entropy => {
            let t = commands::entropy(cfg)?;
            output::write_table(&t, format, sink(cfg)?)
        }
        Command::Validate => {
            let report = validate::validate(cfg)?;
            validate::write_report(&report, format, sink(cfg)?)?;
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::ValidationFailed)
            }
        }
        Command::Amplitudes { energy, p0, incident } => {
            let dump = commands::amplitudes(cfg, *energy, *p0, incident.as_deref())?;
            commands::write_amplitudes(&dump, format, sink(cfg)?)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = load_config(&cli).and_then(|cfg| {
        qthermostat::exec::with_threads(cfg.run.threads, || execute(&cli.command, &cfg))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qthermostat: {e}");
            e.exit_code()
        }
    }
}
