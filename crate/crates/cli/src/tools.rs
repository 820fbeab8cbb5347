use std::path::PathBuf;

use clap::Subcommand;
use serde_json::Value;
use webforge_core::config::ToolkitConfig;
use webforge_core::sandbox::Workspace;
use webforge_core::tools::{schema, ToolRegistry, ToolRuntime};

use crate::{failure, usage, CliResult};

#[derive(Debug, Subcommand)]
pub enum ToolsCmd {
    /// Run one tool inside a workspace and print its result as JSON.
    Exec {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        tool: String,
        /// Tool arguments as a JSON object.
        #[arg(long, default_value = "{}")]
        args: String,
    },
}

pub fn run(cmd: &ToolsCmd, cfg: &ToolkitConfig) -> CliResult {
    let ToolsCmd::Exec { workspace, tool, args } = cmd;
    let args: Value = serde_json::from_str(args).map_err(|e| usage(format!("--args is not JSON: {e}")))?;
    let registry = ToolRegistry::default();
    let spec = registry.get(tool).ok_or_else(|| {
        let known: Vec<&str> = registry.names().collect();
        usage(format!("unknown tool `{tool}` (known: {})", known.join(", ")))
    })?;
    schema::validate(&spec.parameters, &args).map_err(|e| usage(format!("invalid arguments for {tool}: {e}")))?;
    let ws = Workspace::open(workspace).map_err(|e| usage(format!("workspace {}: {e}", workspace.display())))?;
    let mut tools = cfg.tools.clone();
    tools.gui_max_actions = cfg.limits.gui_max_actions;
    let rt = ToolRuntime::new(ws, tools);
    let result = rt.execute_named(tool, &args);
    rt.shutdown();
    println!("{}", serde_json::to_string_pretty(&result).expect("tool results serialize"));
    if result.is_error {
        return Err(failure(format!("{tool} reported an error")));
    }
    Ok(())
}
