use std::path::PathBuf;

use clap::Subcommand;
use webforge_core::config::ToolkitConfig;
use webforge_core::dev::develop;

use crate::{failure, record_config, usage, CliResult};

#[derive(Debug, Subcommand)]
pub enum DevCmd {
    /// Build a site from an instruction file.
    Generate {
        /// Text file holding the user instruction.
        #[arg(long)]
        instruction: PathBuf,
        /// Run directory: workspace/, trajectories/, manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Transcript unit when replaying (defaults to the instruction file stem).
        #[arg(long)]
        unit: Option<String>,
    },
}

pub fn run(cmd: &DevCmd, cfg: &ToolkitConfig) -> CliResult {
    let DevCmd::Generate { instruction, out, unit } = cmd;
    let text = std::fs::read_to_string(instruction)
        .map_err(|e| usage(format!("instruction {}: {e}", instruction.display())))?;
    if text.trim().is_empty() {
        return Err(usage(format!("instruction {} is empty", instruction.display())));
    }
    let unit = match unit {
        Some(u) => u.clone(),
        None => instruction.file_stem().map_or_else(|| "site".into(), |s| s.to_string_lossy().into_owned()),
    };
    let dev_cfg = cfg.dev_config(&unit).map_err(usage)?;
    record_config(cfg, &out.join("toolkit.toml"))?;
    let run = develop(text.trim(), &dev_cfg, out).map_err(failure)?;
    let calls: usize = run.manifest.sessions.iter().map(|s| s.tool_calls).sum();
    println!(
        "site written to {} ({} sessions, {calls} tool calls)",
        run.workspace.root().display(),
        run.manifest.sessions.len()
    );
    Ok(())
}
