//! Website generation: template choice, planning, then a backend and a
//! frontend coding agent, each seeded with staged prompts.

mod agent;
mod choose;
mod phases;
mod planning;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::llm::{LlmClient, PromptError};
use crate::model::{DevelopmentPlan, ScoreRecord, TemplateKind, TemplateRegistry, Trajectory};
use crate::sandbox::{create_workspace, Workspace};
use crate::tools::{GuiSetup, ToolConfig, ToolRuntime};

pub use agent::{run_agent_loop, AgentRole, AgentSession, LoopOutcome, DEFAULT_TOOL_BUDGET};
pub use choose::{choose_templates, TemplateChoice, TemplateSelection};
pub use phases::{
    render_backend_start, render_frontend_start, render_system_prompt, run_backend_phase, run_frontend_phase,
    validation_prompt, ApiTest, BackendSummary, DemoTable, NO_BACKEND,
};
pub use planning::{color_theme_rule, generate_plan, render_planning_prompt, DEFAULT_COLOR_RULE};

#[derive(Debug, Error)]
pub enum DevError {
    #[error("{phase}: {message}")]
    Phase {
        phase: &'static str,
        message: String,
        /// Session log up to the failure, when one existed.
        partial: Option<Box<Trajectory>>,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl DevError {
    pub fn phase(phase: &'static str, message: impl Into<String>) -> Self {
        DevError::Phase { phase, message: message.into(), partial: None }
    }

    pub fn phase_with(phase: &'static str, message: impl Into<String>, partial: Trajectory) -> Self {
        DevError::Phase { phase, message: message.into(), partial: Some(Box::new(partial)) }
    }

    pub fn phase_name(&self) -> Option<&'static str> {
        match self {
            DevError::Phase { phase, .. } => Some(phase),
            DevError::Prompt(_) => None,
        }
    }
}

/// Model endpoints per role. Clones of one client may be shared.
#[derive(Debug, Clone)]
pub struct DevModels {
    pub planner: LlmClient,
    pub backend: LlmClient,
    pub frontend: LlmClient,
}

impl DevModels {
    pub fn shared(llm: LlmClient) -> Self {
        Self { planner: llm.clone(), backend: llm.clone(), frontend: llm }
    }

    pub fn from_source(source: &crate::config::ModelSource, unit: &str) -> Result<Self, crate::llm::LlmError> {
        Ok(Self {
            planner: source.client(unit, "planner")?,
            backend: source.client(unit, "backend_coder")?,
            frontend: source.client(unit, "frontend_coder")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DevConfig {
    pub models: DevModels,
    pub templates: TemplateRegistry,
    pub tools: ToolConfig,
    pub gui: Option<GuiSetup>,
    pub tool_budget: usize,
}

impl DevConfig {
    pub fn new(models: DevModels, templates: TemplateRegistry) -> Self {
        Self { models, templates, tools: ToolConfig::default(), gui: None, tool_budget: DEFAULT_TOOL_BUDGET }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub role: AgentRole,
    pub file: String,
    pub messages: usize,
    pub tool_calls: usize,
    pub budget: usize,
    pub incomplete: bool,
    pub scores: Vec<ScoreRecord>,
}

/// What `develop` writes to `<out>/manifest.json`, also on failure.
#[derive(Debug, Clone, Serialize)]
pub struct DevManifest {
    pub instruction: String,
    pub status: String,
    pub failed_phase: Option<String>,
    pub error: Option<String>,
    pub templates: Option<TemplateSelection>,
    pub plan: Option<DevelopmentPlan>,
    pub backend_summary: Option<BackendSummary>,
    pub sessions: Vec<SessionSummary>,
}

#[derive(Debug)]
pub struct DevRun {
    pub workspace: Workspace,
    pub manifest: DevManifest,
    pub trajectories: Vec<(AgentRole, Trajectory)>,
}

impl DevRun {
    pub fn score_records(&self) -> Vec<ScoreRecord> {
        self.trajectories.iter().flat_map(|(_, t)| t.score_records.iter().copied()).collect()
    }
}

/// Layout of a run directory.
pub fn workspace_dir(out: &Path) -> PathBuf {
    out.join("workspace")
}

struct Recorder<'a> {
    out: &'a Path,
    manifest: DevManifest,
    trajectories: Vec<(AgentRole, Trajectory)>,
    budget: usize,
}

impl Recorder<'_> {
    fn add(&mut self, role: AgentRole, t: Trajectory) -> std::io::Result<()> {
        let file = format!("trajectories/{}.jsonl", role.as_str());
        std::fs::create_dir_all(self.out.join("trajectories"))?;
        std::fs::write(self.out.join(&file), t.to_jsonl())?;
        self.manifest.sessions.push(SessionSummary {
            role,
            file,
            messages: t.len(),
            tool_calls: t.tool_call_count(),
            budget: self.budget,
            incomplete: t.incomplete,
            scores: t.score_records.clone(),
        });
        self.trajectories.push((role, t));
        self.flush()
    }

    fn flush(&self) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(self.out.join("manifest.json"), text)
    }

    fn fail(&mut self, err: DevError) -> DevError {
        let err = match err {
            DevError::Phase { phase, message, partial: Some(t) } => {
                let role = if phase == "frontend" { AgentRole::FrontendCoder } else { AgentRole::BackendCoder };
                if let Err(e) = self.add(role, (*t).clone()) {
                    log::warn!("could not save partial trajectory: {e}");
                }
                DevError::Phase { phase, message, partial: Some(t) }
            }
            other => other,
        };
        self.manifest.status = "failed".into();
        self.manifest.failed_phase = err.phase_name().map(str::to_string);
        self.manifest.error = Some(err.to_string());
        if let Err(e) = self.flush() {
            log::warn!("could not write manifest: {e}");
        }
        err
    }
}

/// Runs the whole pipeline into `out`: the generated site lands in
/// `out/workspace`, session logs in `out/trajectories`, and a manifest is
/// kept current after every phase so failures leave partial artifacts.
pub fn develop(instruction: &str, cfg: &DevConfig, out: &Path) -> Result<DevRun, DevError> {
    std::fs::create_dir_all(out).map_err(|e| DevError::phase("setup", e.to_string()))?;
    let mut rec = Recorder {
        out,
        manifest: DevManifest {
            instruction: instruction.to_string(),
            status: "running".into(),
            failed_phase: None,
            error: None,
            templates: None,
            plan: None,
            backend_summary: None,
            sessions: Vec::new(),
        },
        trajectories: Vec::new(),
        budget: cfg.tool_budget,
    };
    match run(instruction, cfg, out, &mut rec) {
        Ok(workspace) => {
            rec.manifest.status = "complete".into();
            rec.flush().map_err(|e| DevError::phase("setup", e.to_string()))?;
            Ok(DevRun { workspace, manifest: rec.manifest, trajectories: rec.trajectories })
        }
        Err(e) => Err(rec.fail(e)),
    }
}

fn run(instruction: &str, cfg: &DevConfig, out: &Path, rec: &mut Recorder) -> Result<Workspace, DevError> {
    let io = |phase: &'static str| move |e: std::io::Error| DevError::phase(phase, e.to_string());
    let selection = choose_templates(&cfg.models.planner, instruction, &cfg.templates)?;
    rec.manifest.templates = Some(selection.clone());
    rec.flush().map_err(io("template_choice"))?;

    let frontend = cfg.templates.get(&selection.frontend).expect("chosen from registry");
    let backend = selection.backend.as_deref().map(|b| cfg.templates.get(b).expect("chosen from registry"));
    let mut mounted = vec![frontend];
    mounted.extend(backend);
    let ws =
        create_workspace(&mounted, &workspace_dir(out)).map_err(|e| DevError::phase("workspace", e.to_string()))?;

    let plan = generate_plan(&cfg.models.planner, instruction)?;
    rec.manifest.plan = Some(plan.clone());
    rec.flush().map_err(io("planning"))?;

    let mut rt = ToolRuntime::new(ws.clone(), cfg.tools.clone());
    if let Some(env) = backend.and_then(|b| b.db_env.clone()) {
        rt = rt.with_env(env);
    }
    if let Some(gui) = &cfg.gui {
        rt = rt.with_gui(gui.clone());
    }

    let summary = match backend {
        Some(template) => {
            debug_assert_eq!(template.kind, TemplateKind::Backend);
            let (t, summary) =
                run_backend_phase(&cfg.models.backend, &rt, &plan, instruction, template, cfg.tool_budget)?;
            rec.add(AgentRole::BackendCoder, t).map_err(io("backend"))?;
            rec.manifest.backend_summary = Some(summary.clone());
            Some(summary)
        }
        None => None,
    };
    let t =
        run_frontend_phase(&cfg.models.frontend, &rt, &plan, instruction, frontend, summary.as_ref(), cfg.tool_budget)?;
    rec.add(AgentRole::FrontendCoder, t).map_err(io("frontend"))?;
    rt.shutdown();
    Ok(ws)
}
