//! The ten agent tools, their parameter schemas, and a runtime that executes
//! validated calls against one workspace.

mod backend;
mod files;
mod frontend;
pub mod gui;
mod registry;
pub mod schema;
mod shell;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::llm::LlmClient;
use crate::model::{ScoreKind, ToolCall};
use crate::sandbox::{resolve_path, PortRegistry, SandboxError, Workspace};

pub use gui::{GuiDriver, GuiDriverFactory, GuiError, Observation};
pub use registry::{ToolClass, ToolRegistry, ToolSpec, TOOL_NAMES};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub content: String,
    pub is_error: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<Value>,
    /// Quality signals raised by the debugging tools.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<(ScoreKind, f64)>,
}

impl ToolResult {
    pub fn ok(content: impl Into<String>) -> Self {
        Self { content: content.into(), ..Self::default() }
    }

    pub fn error(content: impl Into<String>) -> Self {
        Self { content: content.into(), is_error: true, ..Self::default() }
    }

    pub fn with_structured(mut self, value: Value) -> Self {
        self.structured = Some(value);
        self
    }

    pub fn with_score(mut self, kind: ScoreKind, value: f64) -> Self {
        self.scores.push((kind, value));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolConfig {
    pub read_file_cap_bytes: usize,
    pub search_max_matches: usize,
    pub shell_timeout_secs: u64,
    pub ready_timeout_secs: u64,
    pub request_timeout_secs: u64,
    pub terminate_grace_ms: u64,
    /// Directory names skipped by listing and search tools.
    pub ignore_globs: Vec<String>,
    /// Service output lines matching any of these count as runtime errors
    /// during frontend_test.
    pub error_patterns: Vec<String>,
    pub gui_max_actions: usize,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            read_file_cap_bytes: 256 * 1024,
            search_max_matches: 500,
            shell_timeout_secs: 120,
            ready_timeout_secs: 60,
            request_timeout_secs: 30,
            terminate_grace_ms: 5000,
            ignore_globs: vec!["node_modules".into(), ".git".into()],
            error_patterns: vec![r"(?i)\b(error|exception|traceback|unhandled|fatal)\b".into()],
            gui_max_actions: 15,
        }
    }
}

impl ToolConfig {
    pub fn ready_timeout(&self) -> Duration {
        Duration::from_secs(self.ready_timeout_secs)
    }

    pub fn grace(&self) -> Duration {
        Duration::from_millis(self.terminate_grace_ms)
    }
}

/// Browser driving plus the vision model that operates it.
#[derive(Clone)]
pub struct GuiSetup {
    pub drivers: std::sync::Arc<dyn GuiDriverFactory>,
    pub agent: LlmClient,
}

impl std::fmt::Debug for GuiSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("GuiSetup")
    }
}

/// Executes tool calls for one agent session.
pub struct ToolRuntime {
    ws: Workspace,
    cfg: ToolConfig,
    registry: ToolRegistry,
    write_roots: Option<Vec<PathBuf>>,
    env: BTreeMap<String, String>,
    gui: Option<GuiSetup>,
    clock: Option<Mutex<i64>>,
    ports: PortRegistry,
    background: Mutex<Vec<shell::Background>>,
}

impl std::fmt::Debug for ToolRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRuntime").field("root", &self.ws.root()).finish_non_exhaustive()
    }
}

impl ToolRuntime {
    pub fn new(ws: Workspace, cfg: ToolConfig) -> Self {
        Self {
            ws,
            cfg,
            registry: ToolRegistry::default(),
            write_roots: None,
            env: BTreeMap::new(),
            gui: None,
            clock: None,
            ports: PortRegistry::global().clone(),
            background: Mutex::new(Vec::new()),
        }
    }

    /// Restricts write_file and replace to these workspace-relative subtrees.
    pub fn with_write_roots(mut self, roots: &[&str]) -> Self {
        self.write_roots = Some(roots.iter().map(|r| self.ws.root().join(r)).collect());
        self
    }

    /// Variables exported to every spawned service (e.g. the db_env block).
    pub fn with_env(mut self, env: BTreeMap<String, String>) -> Self {
        self.env = env;
        self
    }

    pub fn with_gui(mut self, gui: GuiSetup) -> Self {
        self.gui = Some(gui);
        self
    }

    pub fn with_ports(mut self, ports: PortRegistry) -> Self {
        self.ports = ports;
        self
    }

    /// Stamps every file mutation with `base + n` seconds instead of wall
    /// time, so mtime-ordered listings replay identically.
    pub fn with_logical_clock(mut self, base: i64) -> Self {
        self.clock = Some(Mutex::new(base));
        self
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    pub fn config(&self) -> &ToolConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn execute(&self, call: &ToolCall) -> ToolResult {
        self.execute_named(&call.name, &call.arguments)
    }

    pub fn execute_named(&self, name: &str, args: &Value) -> ToolResult {
        let Some(spec) = self.registry.get(name) else {
            return ToolResult::error(format!("unknown tool `{name}`"));
        };
        if let Err(e) = schema::validate(&spec.parameters, args) {
            return ToolResult::error(format!("invalid arguments for {name}: {e}"));
        }
        match name {
            "read_file" => files::read_file(self, args),
            "write_file" => files::write_file(self, args),
            "list_directory" => files::list_directory(self, args),
            "glob" => files::glob(self, args),
            "search_file_content" => files::search_file_content(self, args),
            "read_many_files" => files::read_many_files(self, args),
            "replace" => files::replace(self, args),
            "run_shell_command" => shell::run_shell_command(self, args),
            "backend_test" => backend::backend_test(self, args),
            "frontend_test" => frontend::frontend_test(self, args),
            _ => ToolResult::error(format!("tool `{name}` has no implementation")),
        }
    }

    pub(crate) fn resolve(&self, requested: &str) -> Result<PathBuf, SandboxError> {
        resolve_path(&self.ws, requested)
    }

    pub(crate) fn resolve_writable(&self, requested: &str) -> Result<PathBuf, String> {
        if !self.ws.writable() {
            return Err("workspace is read-only".into());
        }
        let path = self.resolve(requested).map_err(|e| e.to_string())?;
        if let Some(roots) = &self.write_roots {
            if !roots.iter().any(|r| path.starts_with(r)) {
                let allowed: Vec<String> = roots.iter().map(|r| r.display().to_string()).collect();
                return Err(format!(
                    "write policy violation: {} is outside the writable area ({})",
                    path.display(),
                    allowed.join(", ")
                ));
            }
        }
        Ok(path)
    }

    pub(crate) fn stamp(&self, path: &std::path::Path) {
        if let Some(clock) = &self.clock {
            let mut t = clock.lock().unwrap();
            *t += 1;
            let ft = filetime::FileTime::from_unix_time(*t, 0);
            if let Err(e) = filetime::set_file_mtime(path, ft) {
                log::warn!("could not stamp {}: {e}", path.display());
            }
        }
    }

    /// Stops every background process this runtime started.
    pub fn shutdown(&self) {
        for bg in self.background.lock().unwrap().drain(..) {
            bg.handle.terminate_with_grace(self.cfg.grace());
        }
    }
}

impl Drop for ToolRuntime {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub(crate) fn str_arg<'a>(args: &'a Value, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

pub(crate) fn ports_arg(args: &Value) -> Vec<u16> {
    args.get("required_ports")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_u64).filter_map(|p| u16::try_from(p).ok()).collect())
        .unwrap_or_default()
}
