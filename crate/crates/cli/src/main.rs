//! `infield` command line: every experiment stage is a subcommand driven by
//! one JSON config. Exit codes: 0 ok, 1 runtime failure (JSON report on
//! stderr), 2 usage error.

mod commands;
mod config;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::commands::Ctx;
use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "infield", version, about = "Intrinsic neural fields on meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Replace every stage seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic texture from the train and test rigs.
    GenData(Common),
    /// Compute the Laplace-Beltrami eigenbasis and print the spectrum.
    Eigens(Common),
    /// Fit the field to the training views.
    Train(Common),
    /// Render novel views and score them against ground truth.
    Render {
        #[command(flatten)]
        common: Common,
        /// Split whose cameras to use.
        #[arg(long, default_value = "test")]
        split: String,
        /// Render only this camera of the split.
        #[arg(long)]
        camera: Option<usize>,
    },
    /// NTK matrices, spectral coefficients and stationarity scores.
    Ntk(Common),
    /// Transfer the trained field to the target shape via a functional map.
    Transfer {
        #[command(flatten)]
        common: Common,
        /// Point-to-point correspondence file (INFP2P).
        #[arg(long)]
        p2p: Option<PathBuf>,
    },
    /// 1-D spectral-bias benchmark on a closed curve.
    Bench1d(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Eigens(_) => "eigens",
            Command::Train(_) => "train",
            Command::Render { .. } => "render",
            Command::Ntk(_) => "ntk",
            Command::Transfer { .. } => "transfer",
            Command::Bench1d(_) => "bench1d",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::GenData(c) | Command::Eigens(c) | Command::Train(c) | Command::Ntk(c) | Command::Bench1d(c) => c,
            Command::Render { common, .. } | Command::Transfer { common, .. } => common,
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    subcommand: &'a str,
    kind: &'a str,
    message: String,
    causes: Vec<String>,
}

fn classify(e: &anyhow::Error, config_stage: bool) -> &'static str {
    if config_stage {
        return "config";
    }
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<infield::Error>() {
            use infield::Error as E;
            return match err {
                E::Parse { .. } => "parse",
                E::DegenerateFaces { .. } | E::NonManifold { .. } | E::InvalidMesh(_) => "invalid_mesh",
                E::OffPlane { .. } | E::Shape(_) => "shape",
                E::HashMismatch { .. } => "hash_mismatch",
                E::NoConvergence { .. } | E::NotPositiveDefinite { .. } => "eigensolver",
                E::NonFinite(_) => "non_finite",
                E::Diverged { .. } => "diverged",
                E::InvalidArgument(_) => "invalid_argument",
                E::Container(_) => "container",
                E::Io(_) | E::Image(_) => "io",
                E::Json(_) => "json",
            };
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "runtime"
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.override_seed(s);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate().context("invalid config")?;
    Ok(cfg)
}

fn run(command: &Command, cfg: ExperimentConfig) -> Result<()> {
    let name = command.name();
    let mut ctx = Ctx::new(cfg, name);
    match command {
        Command::GenData(_) => commands::gen_data(&mut ctx)?,
        Command::Eigens(_) => commands::eigens(&mut ctx)?,
        Command::Train(_) => commands::train_cmd(&mut ctx)?,
        Command::Render { split, camera, .. } => commands::render(&mut ctx, split, *camera)?,
        Command::Ntk(_) => commands::ntk(&mut ctx)?,
        Command::Transfer { p2p, .. } => commands::transfer(&mut ctx, p2p.as_deref())?,
        Command::Bench1d(_) => commands::bench1d(&mut ctx)?,
    }
    ctx.finish(name)
}

fn report(subcommand: &str, e: &anyhow::Error, config_stage: bool) {
    let r = ErrorReport {
        subcommand,
        kind: classify(e, config_stage),
        message: e.to_string(),
        causes: e.chain().skip(1).map(|c| c.to_string()).collect(),
    };
    let json = serde_json::to_string(&serde_json::json!({ "error": r })).expect("error report serializes");
    eprintln!("{json}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // clap exits 2 for usage errors and 0 for --help / --version
        Err(e) => e.exit(),
    };
    let name = cli.command.name();
    let common = cli.command.common();
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            report(name, &anyhow::Error::new(e), false);
            return ExitCode::FAILURE;
        }
    }
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(e) => {
            report(name, &e, true);
            return ExitCode::FAILURE;
        }
    };
    match run(&cli.command, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(name, &e, false);
            ExitCode::FAILURE
        }
    }
}
