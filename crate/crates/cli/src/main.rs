//! `dirac-detect`: batch runs of the detection-time simulator.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use commands::Command;
use config::ExperimentConfig;
use error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(name = "dirac-detect", version, about = "Detection-time distributions for Dirac particles with absorbing boundaries")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Seed of the run's random generator; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Only report warnings and errors.
    #[arg(long)]
    quiet: bool,
}

fn execute(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let source = fs::read_to_string(&cli.config)
        .map_err(|source| CliError::Io { path: cli.config.display().to_string(), source })?;
    let cfg = ExperimentConfig::parse(&source)?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    log::info!("{:?}: config {}, seed {seed}", cli.command, cli.config.display());
    let art = commands::run(cli.command, &cfg, seed)?;
    let meta = commands::metadata(cli.command, &cfg, &source, seed, &art, start);
    write_outputs(&cli.out, &art.files, &meta)?;
    log::info!("wrote {} files to {} in {:.2} s", art.files.len() + 1, cli.out.display(), start.elapsed().as_secs_f64());
    Ok(())
}

fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)], meta: &serde_json::Value) -> Result<()> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io(&path))?;
    }
    let path = dir.join("metadata.json");
    let mut text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io(&path))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
