//! Command-line driver: scene simulation, keyframe-by-keyframe solving,
//! ablation sweeps and trajectory evaluation.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use structslam_core::eval::EvalConfig;

use commands::Console;
use config::RunConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "structslam", version, about = "Structure-aware SLAM back-end experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides shared by the commands that read a run configuration.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration; library defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed list replacing `run.seeds`, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    /// Output directory replacing `run.out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ablation list replacing `run.ablations`, comma-separated (P, PP, PP+M, PQ, PPQ+MS).
    #[arg(long, value_delimiter = ',')]
    pub ablation: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scene and its measurements (first seed only).
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve a simulated sequence for each configured ablation.
    Solve {
        /// Directory holding ground_truth.txt and measurements.txt.
        scene: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run every (seed, ablation) cell and write the metric table.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        delta: Option<usize>,
        #[arg(long)]
        max_dt: Option<f64>,
    },
    /// Compare an estimated TUM trajectory against a reference.
    Eval {
        estimate: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value_t = structslam_core::eval::DEFAULT_DELTA)]
        delta: usize,
        #[arg(long, default_value_t = structslam_core::eval::DEFAULT_MAX_DT)]
        max_dt: f64,
        /// Also write the metrics as CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
            RunConfig::from_toml(&text).map_err(|message| CliError::Parse {
                path: p.to_path_buf(),
                message,
            })
        }
    }
}

fn resolve(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = load_config(run.config.as_deref())?;
    if let Some(seeds) = &run.seed {
        cfg.run.seeds = seeds.clone();
    }
    if let Some(out) = &run.out {
        cfg.run.out = out.clone();
    }
    if let Some(ablations) = &run.ablation {
        cfg.run.ablations = ablations.clone();
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn execute(cli: Cli, console: &mut Console<'_>) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { run } => commands::cmd_simulate(&resolve(&run)?, console),
        Command::Solve { scene, run } => commands::cmd_solve(&resolve(&run)?, &scene, console),
        Command::Ablate { run, delta, max_dt } => {
            let mut cfg = resolve(&run)?;
            cfg.eval.delta = delta.unwrap_or(cfg.eval.delta);
            cfg.eval.max_dt = max_dt.unwrap_or(cfg.eval.max_dt);
            cfg.validate().map_err(CliError::Config)?;
            commands::cmd_ablate(&cfg, console).map(|_| ())
        }
        Command::Eval {
            estimate,
            reference,
            delta,
            max_dt,
            out,
        } => {
            let config = EvalConfig { delta, max_dt };
            if delta < 1 || !(max_dt > 0.0) {
                return Err(CliError::Config("--delta must be >= 1 and --max-dt positive".into()));
            }
            commands::cmd_eval(&estimate, &reference, &config, out.as_ref(), console).map(|_| ())
        }
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let mut console = Console { out, err };
    match execute(cli, &mut console) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(console.err, "error: {e}");
            e.exit_code()
        }
    }
}
