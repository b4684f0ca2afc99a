//! Experiment harness around `elastonet-core`: strict JSON configuration,
//! FEM data generation, training, evaluation and derivative checks, with
//! every artifact written under one output directory.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod io;
pub mod modulus;

pub use config::{ExperimentConfig, Mode, ModulusSpec, Profile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Config(format!("{}: {e}", path.display()))
    }
}

#[derive(Parser, Debug)]
#[command(name = "elastonet", version, about = "Shear-modulus identification with physics-informed networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON experiment configuration; defaults reproduce the reference setup.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides paths.output).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Epoch budget; applied after --profile.
    #[arg(long, global = true)]
    pub epochs: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the forward problem by FEM and write the measurement CSV.
    Generate,
    /// Train the networks against the measurements.
    Train {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint's modulus on a grid.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Grid nodes per side (overrides evaluation.grid_per_side).
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Compare every derivative path with central finite differences.
    Gradcheck {
        /// Sampled parameters for the full loss gradient.
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Corrupt one category's derivatives (negative control).
        #[arg(long, hide = true)]
        fault: Option<String>,
    },
}

/// The configuration after applying the command-line overrides, plus the
/// output directory.
pub fn effective_config(common: &Common) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = common.profile {
        cfg.training.epochs = p.epochs();
    }
    if let Some(e) = common.epochs {
        cfg.training.epochs = e;
    }
    if let Some(s) = common.seed {
        cfg.training.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.paths.output = o.clone();
    }
    cfg.validate()?;
    let out = cfg.paths.output.clone();
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (mut cfg, out) = effective_config(&cli.common)?;
    let quiet = cli.common.quiet;
    match cli.command {
        Command::Generate => commands::generate(&cfg, &out, quiet).map(|_| ()),
        Command::Train { resume } => commands::train(&cfg, &out, resume.as_deref(), quiet).map(|_| ()),
        Command::Evaluate { checkpoint, grid } => {
            if let Some(n) = grid {
                cfg.evaluation.grid_per_side = n;
                cfg.validate()?;
            }
            commands::evaluate(&cfg, &out, &checkpoint).map(|_| ())
        }
        Command::Gradcheck { samples, fault } => {
            let report = commands::gradcheck(&cfg, samples, fault.as_deref())?;
            print!("{}", commands::format_gradcheck(&report));
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::Numerical("derivative check exceeded its threshold".into()))
            }
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("elastonet: {e}");
            e.exit_code()
        }
    }
}
