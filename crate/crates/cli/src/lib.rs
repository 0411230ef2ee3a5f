//! Experiment runner behind the `pdl` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pdl_core::schemes::Scheme;
use pdl_core::{Error, Result};

pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "pdl", version, about = "Primal-dual learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the family and datasets, and solve reference solutions.
    Generate(Common),
    /// Train the configured scheme once per seed.
    Train(Common),
    /// Evaluate trained models on the test split.
    Eval(Common),
    /// Solve the test split with multi-start ALM.
    AlmSolve(Common),
    /// Collect evaluation summaries into one table.
    Report(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset used when no config is given: qp-default, qcqp-default.
    #[arg(long)]
    pub preset: Option<String>,
    /// Seed override: data seed for generate, ALM seed for alm-solve, the
    /// single training seed otherwise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory override.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace the scheme section with the defaults of this scheme.
    #[arg(long)]
    pub scheme: Option<String>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Generate(c) | Command::Train(c) | Command::Eval(c) | Command::AlmSolve(c) | Command::Report(c) => {
                c
            }
        }
    }
}

/// Builds the effective config from file or preset plus overrides.
pub fn resolve_config(cmd: &Command) -> Result<ExperimentConfig> {
    let c = cmd.common();
    let mut cfg = match (&c.config, &c.preset) {
        (Some(_), Some(_)) => return Err(Error::Config("pass either --config or --preset, not both".into())),
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
    };
    if let Some(name) = &c.scheme {
        let s = Scheme::parse(name).ok_or_else(|| Error::Config(format!("unknown scheme `{name}`")))?;
        cfg = cfg.with_scheme(s)?;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = c.seed {
        match cmd {
            Command::Generate(_) => cfg.data.seed = seed,
            Command::AlmSolve(_) => cfg.alm.seed = seed,
            _ => cfg.seeds = vec![seed],
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(&cli.command)?;
    if let Some(jobs) = cli.command.common().jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Generate(_) => commands::generate(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Eval(_) => commands::eval(&cfg),
        Command::AlmSolve(_) => commands::alm_solve(&cfg),
        Command::Report(_) => commands::report(&cfg),
    }
}

/// Process exit code for an error: 2 config, 3 data, 4 numeric.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Dimension { .. } | Error::Budget { .. } | Error::Generation(_) => 2,
        Error::Data(_) | Error::Parse { .. } | Error::Version { .. } | Error::Io(_) => 3,
        Error::NonFinite { .. } | Error::NonFiniteIterate { .. } | Error::UndefinedGap | Error::Contract(_) => 4,
    }
}
