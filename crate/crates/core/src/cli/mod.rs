//! Command-line front end.
//!
//! Exit codes: 0 success, 1 numerical or optimizer failure, 2 configuration
//! or I/O error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "morison-greybox", version, about = "Grey-box wave force modelling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads, 0 for all cores (overrides the config).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// ARX lag search over the configured grid.
    Lagsearch,
    /// Train the configured models and write them to <out>/models.
    Train,
    /// Score trained models on the test split.
    Evaluate {
        /// Directory holding the model files (default <out>/models).
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Coverage-versus-error sweep.
    Coverage,
    /// Welch spectra of the three splits and their similarity tables.
    Spectra,
    /// Write a synthetic dataset to <out>/dataset.csv.
    Synth,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lagsearch => "lagsearch",
            Command::Train => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Coverage => "coverage",
            Command::Spectra => "spectra",
            Command::Synth => "synth",
        }
    }
}

/// Loads the configuration with command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.out.clone_from(o);
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Lagsearch => commands::lagsearch(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Evaluate { models } => commands::evaluate(&cfg, models.as_deref()),
        Command::Coverage => commands::coverage(&cfg),
        Command::Spectra => commands::spectra(&cfg),
        Command::Synth => commands::synth(&cfg),
    })
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_user_error() {
        2
    } else {
        1
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let started = Instant::now();
    match run(&cli) {
        Ok(()) => {
            eprintln!("{} finished in {:.2} s", cli.command.name(), started.elapsed().as_secs_f64());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
