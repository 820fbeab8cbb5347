use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{BenchConfig, DbConfig};
use crate::dev::{DevConfig, DevModels, DEFAULT_TOOL_BUDGET};
use crate::learn::{
    Colors, DecontamConfig, Embedder, HashingEmbedder, HttpEmbedder, LearnConfig, DEFAULT_ADJUSTED_ROOT,
    DEFAULT_QUALITY_CUTOFF,
};
use crate::llm::{EndpointDescriptor, LlmClient, LlmError};
use crate::model::{FilterConfig, TemplateRegistry};
use crate::tools::gui::CdpDriverFactory;
use crate::tools::{GuiDriverFactory, ToolConfig};

use super::{LiveModels, ModelSource};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}: {1}")]
    Read(PathBuf, std::io::Error),
    #[error("{0}: {1}")]
    Parse(PathBuf, String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Model endpoints by purpose. Unset ones fall back to `coder`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    pub coder: Option<EndpointDescriptor>,
    pub planner: Option<EndpointDescriptor>,
    /// Vision model that drives the browser, in testing and in judging.
    pub gui_judge: Option<EndpointDescriptor>,
    pub backend_judge: Option<EndpointDescriptor>,
    pub db_judge: Option<EndpointDescriptor>,
    /// OpenAI-style `/embeddings`; unset uses the offline hashing embedder.
    pub embedder: Option<EndpointDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub tool_budget: usize,
    pub gui_max_actions: usize,
    /// Parallel repositories or sites; unset picks min(4, cpus).
    pub workers: Option<usize>,
}

impl Default for Limits {
    fn default() -> Self {
        Self { tool_budget: DEFAULT_TOOL_BUDGET, gui_max_actions: 15, workers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSection {
    pub quality_cutoff: u8,
    pub adjusted_root: PathBuf,
    pub colors: Colors,
    /// Text file with one benchmark instruction per line.
    pub bench_instructions: Option<PathBuf>,
    pub replay_shell: bool,
}

impl Default for LearnSection {
    fn default() -> Self {
        Self {
            quality_cutoff: DEFAULT_QUALITY_CUTOFF,
            adjusted_root: DEFAULT_ADJUSTED_ROOT.into(),
            colors: Colors::default(),
            bench_instructions: None,
            replay_shell: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub appearance_links: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { appearance_links: 4 }
    }
}

/// The whole toolkit configuration, read from TOML. Every key is optional;
/// defaults are the reference parameters. Secrets never live here: an
/// endpoint names the environment variable holding its key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolkitConfig {
    /// Replays `<dir>/<unit>/<role>.jsonl` instead of calling endpoints.
    pub recorded: Option<PathBuf>,
    pub endpoints: Endpoints,
    /// A running Chromium with remote debugging, for live GUI sessions.
    pub browser: Option<CdpDriverFactory>,
    /// Template registry directory.
    pub templates: Option<PathBuf>,
    pub filter: FilterConfig,
    pub decontam: DecontamConfig,
    pub limits: Limits,
    pub tools: ToolConfig,
    /// Database for bench sites whose manifest names none.
    pub database: Option<DbConfig>,
    pub learn: LearnSection,
    pub bench: BenchSection,
}

/// Endpoint section each role reads.
pub fn endpoint_for_role(role: &str) -> &'static str {
    match role {
        "planner" => "planner",
        "gui_agent" | "gui_judge" | "appearance_judge" => "gui_judge",
        "backend_judge" | "api_catalog" => "backend_judge",
        "db_judge" => "db_judge",
        _ => "coder",
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl ToolkitConfig {
    /// Reads and validates a TOML file; relative paths in it resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg = Self::read(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like `load` without validation, for callers that override keys first.
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        let mut cfg: ToolkitConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(path.to_path_buf(), e.to_string()))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.recorded);
        resolve(base, &mut self.templates);
        resolve(base, &mut self.learn.bench_instructions);
        let e = &mut self.endpoints;
        for ep in
            [&mut e.coder, &mut e.planner, &mut e.gui_judge, &mut e.backend_judge, &mut e.db_judge, &mut e.embedder]
                .into_iter()
                .flatten()
        {
            resolve(base, &mut ep.scripted);
        }
        if let Some(db) = &mut self.database {
            resolve(base, &mut db.path);
            resolve(base, &mut db.statement_log);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    fn endpoint(&self, section: &str) -> Option<&EndpointDescriptor> {
        let e = &self.endpoints;
        let own = match section {
            "planner" => e.planner.as_ref(),
            "gui_judge" => e.gui_judge.as_ref(),
            "backend_judge" => e.backend_judge.as_ref(),
            "db_judge" => e.db_judge.as_ref(),
            _ => None,
        };
        own.or(e.coder.as_ref())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.filter.validate().map_err(|e| ConfigError::Invalid(format!("filter: {e}")))?;
        let d = &self.decontam;
        for (name, v) in [("jaccard_threshold", d.jaccard_threshold), ("cosine_threshold", d.cosine_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("decontam.{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.limits.tool_budget == 0 || self.limits.gui_max_actions == 0 {
            return bad("limits.tool_budget and limits.gui_max_actions must be positive".into());
        }
        if self.limits.workers == Some(0) {
            return bad("limits.workers must be positive".into());
        }
        if let Some(dir) = &self.recorded {
            if !dir.is_dir() {
                return bad(format!("recorded: {} is not a directory", dir.display()));
            }
            return Ok(());
        }
        let e = &self.endpoints;
        let named = [
            ("coder", &e.coder),
            ("planner", &e.planner),
            ("gui_judge", &e.gui_judge),
            ("backend_judge", &e.backend_judge),
            ("db_judge", &e.db_judge),
            ("embedder", &e.embedder),
        ];
        for (name, ep) in named {
            let Some(ep) = ep else { continue };
            match &ep.scripted {
                Some(p) if !p.is_file() => return bad(format!("endpoints.{name}.scripted: {} not found", p.display())),
                Some(_) => {}
                None if ep.base_url.trim().is_empty() || ep.model.trim().is_empty() => {
                    return bad(format!("endpoints.{name} needs base_url and model, or scripted"))
                }
                None => {}
            }
        }
        if e.coder.is_none() {
            for section in ["planner", "gui_judge", "backend_judge", "db_judge"] {
                if self.endpoint(section).is_none() {
                    return bad(format!(
                        "endpoints.{section} is unset and there is no endpoints.coder to fall back on"
                    ));
                }
            }
        }
        Ok(())
    }

    fn client(&self, section: &str) -> Result<LlmClient, ConfigError> {
        let ep = self.endpoint(section).ok_or_else(|| ConfigError::Invalid(format!("no endpoint for {section}")))?;
        Ok(LlmClient::from_endpoint(ep)?)
    }

    pub fn model_source(&self) -> Result<ModelSource, ConfigError> {
        if let Some(dir) = &self.recorded {
            return Ok(ModelSource::Recorded(dir.clone()));
        }
        let mut by_role = BTreeMap::new();
        for role in
            ["planner", "gui_agent", "gui_judge", "appearance_judge", "backend_judge", "api_catalog", "db_judge"]
        {
            by_role.insert(role.to_string(), self.client(endpoint_for_role(role))?);
        }
        let gui_drivers = self.browser.clone().map(|b| Arc::new(b) as Arc<dyn GuiDriverFactory>);
        Ok(ModelSource::Live(LiveModels { default: self.client("coder")?, by_role, gui_drivers }))
    }

    pub fn template_registry(&self) -> Result<TemplateRegistry, ConfigError> {
        let dir = self.templates.clone().unwrap_or_else(|| PathBuf::from("templates"));
        TemplateRegistry::load_dir(&dir)
            .map_err(|e| ConfigError::Invalid(format!("templates at {}: {e}", dir.display())))
    }

    fn workers(&self) -> usize {
        self.limits.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()).min(4))
    }

    /// `unit` names the recorded transcript directory when replaying.
    pub fn dev_config(&self, unit: &str) -> Result<DevConfig, ConfigError> {
        let source = self.model_source()?;
        let mut cfg = DevConfig::new(DevModels::from_source(&source, unit)?, self.template_registry()?);
        cfg.tools = self.tools_with_limits();
        cfg.gui = source.gui(unit)?;
        cfg.tool_budget = self.limits.tool_budget;
        Ok(cfg)
    }

    fn tools_with_limits(&self) -> ToolConfig {
        ToolConfig { gui_max_actions: self.limits.gui_max_actions, ..self.tools.clone() }
    }

    pub fn learn_config(&self) -> Result<LearnConfig, ConfigError> {
        let registry = self.template_registry()?;
        let mut cfg = LearnConfig::new(self.model_source()?, &registry).ok_or_else(|| {
            ConfigError::Invalid("the template registry needs a frontend and a backend template".into())
        })?;
        cfg.tools = self.tools_with_limits();
        cfg.replay.tools = cfg.tools.clone();
        cfg.replay.replay_shell = self.learn.replay_shell;
        cfg.filter = self.filter.clone();
        cfg.decontam = self.decontam.clone();
        cfg.embedder = match &self.endpoints.embedder {
            Some(ep) => Arc::new(HttpEmbedder { endpoint: ep.clone() }) as Arc<dyn Embedder>,
            None => Arc::new(HashingEmbedder::default()),
        };
        if let Some(path) = &self.learn.bench_instructions {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.clone(), e))?;
            cfg.bench_instructions = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        }
        cfg.quality_cutoff = self.learn.quality_cutoff;
        cfg.tool_budget = self.limits.tool_budget;
        cfg.adjusted_root = self.learn.adjusted_root.clone();
        cfg.colors = self.learn.colors.clone();
        cfg.workers = self.workers();
        Ok(cfg)
    }

    pub fn bench_config(&self) -> Result<BenchConfig, ConfigError> {
        let mut cfg = BenchConfig::new(self.model_source()?);
        cfg.tools = self.tools_with_limits();
        cfg.gui_max_actions = self.limits.gui_max_actions;
        cfg.tool_budget = self.limits.tool_budget;
        cfg.appearance_links = self.bench.appearance_links;
        cfg.workers = self.workers();
        cfg.default_db = self.database.clone();
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::Combinator;
    use crate::model::ScoreKind;

    #[test]
    fn empty_file_gives_reference_defaults() {
        let cfg: ToolkitConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.filter.gamma, 0.9);
        assert_eq!(cfg.filter.thresholds[&ScoreKind::Appearance], 3.0);
        assert_eq!(cfg.filter.thresholds[&ScoreKind::FrontendFunctionality], 3.0);
        assert_eq!(cfg.filter.thresholds[&ScoreKind::BackendFunctionality], 0.0);
        assert_eq!((cfg.decontam.jaccard_threshold, cfg.decontam.cosine_threshold), (0.6, 0.7));
        assert_eq!(cfg.decontam.combinator, Combinator::Or);
        assert_eq!((cfg.limits.tool_budget, cfg.limits.gui_max_actions), (400, 15));
        assert_eq!(cfg.learn.quality_cutoff, 3);
    }

    #[test]
    fn overrides_round_trip() {
        let text = r#"
            [endpoints.coder]
            base_url = "http://localhost:8000/v1"
            model = "coder-large"
            api_key_env = "CODER_KEY"

            [filter]
            gamma = 0.8
            thresholds = { appearance = 2.0, frontend_functionality = 3.0, backend_functionality = 0.0 }

            [decontam]
            combinator = "and"

            [limits]
            tool_budget = 120
        "#;
        let cfg: ToolkitConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.filter.gamma, 0.8);
        assert_eq!(cfg.decontam.combinator, Combinator::And);
        assert_eq!(cfg.limits.tool_budget, 120);
        assert_eq!(cfg.limits.gui_max_actions, 15);
        let back: ToolkitConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.endpoint("db_judge").unwrap().model, "coder-large");
    }

    #[test]
    fn unresolvable_endpoints_are_rejected() {
        let no_coder: ToolkitConfig = toml::from_str("[endpoints.planner]\nmodel = \"p\"").unwrap();
        assert!(no_coder.validate().unwrap_err().to_string().contains("fall back"));
        let blank: ToolkitConfig = toml::from_str("[endpoints.coder]\nmodel = \"\"").unwrap();
        assert!(blank.validate().is_err());
        let missing: ToolkitConfig = toml::from_str("[endpoints.coder]\nscripted = \"/nonexistent.jsonl\"").unwrap();
        assert!(missing.validate().unwrap_err().to_string().contains("not found"));
        assert!(toml::from_str::<ToolkitConfig>("[limits]\ntool_budgett = 3").is_err());
        let gamma: ToolkitConfig = toml::from_str("recorded = \".\"\n[filter]\ngamma = 1.5").unwrap();
        assert!(gamma.validate().is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("rec")).unwrap();
        let path = dir.path().join("toolkit.toml");
        std::fs::write(&path, "recorded = \"rec\"\ntemplates = \"tpl\"").unwrap();
        let cfg = ToolkitConfig::load(&path).unwrap();
        assert_eq!(cfg.recorded.as_deref(), Some(dir.path().join("rec").as_path()));
        assert_eq!(cfg.templates.as_deref(), Some(dir.path().join("tpl").as_path()));
        assert!(matches!(cfg.model_source().unwrap(), ModelSource::Recorded(_)));
    }
}
