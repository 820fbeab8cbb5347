//! `webforge`: generate sites, build training data from repositories, and
//! evaluate sites with judge models.
//!
//! Exit status is 0 on success, 1 when a pipeline fails, and 2 for usage or
//! validation errors.

mod bench;
mod dev;
mod learn;
mod tools;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use webforge_core::config::ToolkitConfig;

/// Default config file looked up in the working directory.
const DEFAULT_CONFIG: &str = "webforge.toml";

#[derive(Debug, Parser)]
#[command(name = "webforge", version, about = "Full-stack web app agents: develop, learn, bench")]
struct Cli {
    /// Toolkit config (TOML). Defaults to ./webforge.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replay recorded transcripts from this directory instead of calling endpoints.
    #[arg(long, global = true)]
    recorded: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a full-stack site from an instruction.
    #[command(subcommand)]
    Dev(dev::DevCmd),
    /// Turn repositories into training trajectories.
    #[command(subcommand)]
    Learn(learn::LearnCmd),
    /// Evaluate sites with judge models.
    #[command(subcommand)]
    Bench(bench::BenchCmd),
    /// Run tools by hand.
    #[command(subcommand)]
    Tools(tools::ToolsCmd),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

pub type CliResult = Result<(), CliError>;

pub fn usage(m: impl std::fmt::Display) -> CliError {
    CliError::Usage(m.to_string())
}

pub fn failure(m: impl std::fmt::Display) -> CliError {
    CliError::Failure(m.to_string())
}

fn load_config(cli: &Cli) -> Result<ToolkitConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ToolkitConfig::read(path).map_err(usage)?,
        None if Path::new(DEFAULT_CONFIG).is_file() => ToolkitConfig::read(Path::new(DEFAULT_CONFIG)).map_err(usage)?,
        None => ToolkitConfig::default(),
    };
    if let Some(dir) = &cli.recorded {
        cfg.recorded = Some(std::path::absolute(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?);
    }
    Ok(cfg)
}

/// Writes the effective configuration next to a run's artifacts.
pub fn record_config(cfg: &ToolkitConfig, path: &Path) -> CliResult {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| failure(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, cfg.to_toml()).map_err(|e| failure(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    let needs_models = !matches!(cli.command, Command::Tools(_) | Command::Bench(bench::BenchCmd::Report(_)));
    if needs_models {
        if cfg.recorded.is_none() && cfg.endpoints.coder.is_none() {
            return Err(usage("no model configured: set [endpoints.coder] in the config or pass --recorded"));
        }
        cfg.validate().map_err(usage)?;
    }
    match &cli.command {
        Command::Dev(cmd) => dev::run(cmd, &cfg),
        Command::Learn(cmd) => learn::run(cmd, &cfg),
        Command::Bench(cmd) => bench::run(cmd, &cfg),
        Command::Tools(cmd) => tools::run(cmd, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
