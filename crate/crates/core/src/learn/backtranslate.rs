use std::path::Path;

use serde_json::{json, Value};

use crate::dev::{render_system_prompt, run_agent_loop, AgentRole, AgentSession, LoopOutcome};
use crate::llm::{render_prompt, slots, LlmClient, PromptId};
use crate::model::{ChatMessage, TemplateDescriptor, TemplateKind, Trajectory};
use crate::sandbox::Workspace;
use crate::tools::ToolRuntime;

use super::{LearnError, RepoSummary};

/// Directory the back-translation agent builds into.
pub const NEW_PROJECT: &str = "new_project";

pub mod meta {
    pub const STAGED_MESSAGES: &str = "staged_messages";
    pub const ORIGIN_REPO_ROOT: &str = "origin_repo_root";
    pub const ORIGIN_NAME: &str = "origin_name";
    pub const NEW_PROJECT_ROOT: &str = "new_project_root";
    pub const WORKSPACE_ROOT: &str = "workspace_root";
    /// Which canonical prompt replaces each staged message.
    pub const STAGE_KINDS: &str = "stage_kinds";
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Colors {
    pub background: String,
    pub component: String,
}

impl Default for Colors {
    fn default() -> Self {
        Self { background: "white".into(), component: "navy".into() }
    }
}

/// Lays out `dest/<origin_name>` (a copy of the repository) next to
/// `dest/new_project/{frontend,backend}` (fresh scaffolds).
pub fn prepare_backtranslation(
    repo: &Path,
    origin_name: &str,
    frontend: &TemplateDescriptor,
    backend: &TemplateDescriptor,
    dest: &Path,
) -> Result<Workspace, LearnError> {
    if origin_name == NEW_PROJECT || origin_name.contains('/') || origin_name.is_empty() {
        return Err(LearnError::stage("backtranslate", format!("unusable repository name `{origin_name}`")));
    }
    let mounts = [
        (origin_name.to_string(), repo.to_path_buf()),
        (format!("{NEW_PROJECT}/{}", TemplateKind::Frontend.subdir()), frontend.scaffold_path.clone()),
        (format!("{NEW_PROJECT}/{}", TemplateKind::Backend.subdir()), backend.scaffold_path.clone()),
    ];
    Workspace::from_mounts(dest, &mounts).map_err(|e| LearnError::stage("backtranslate", e))
}

fn stage_prompt(id: PromptId, summary: &RepoSummary, origin_name: &str, colors: &Colors) -> String {
    let plan = match id {
        PromptId::BacktranslateBackend => ("backendPlan", serde_json::to_string_pretty(&summary.backend_plan)),
        _ => ("frontendPlan", serde_json::to_string_pretty(&summary.frontend_plan)),
    };
    let mut s = slots([
        ("origProjectName", origin_name.to_string()),
        ("title", summary.title.clone()),
        ("description", summary.description.clone()),
        ("userInstruction", summary.user_instruction.clone()),
        (plan.0, plan.1.expect("plans serialize")),
    ]);
    if id == PromptId::BacktranslateFrontend {
        s.insert("backgroundColor".into(), colors.background.clone());
        s.insert("componentColor".into(), colors.component.clone());
    }
    render_prompt(id, &s).expect("back-translation slots are complete")
}

/// Backend stage then frontend stage over one session. The runtime should
/// confine writes to `new_project`. Running out of budget ends the session
/// early with the trajectory marked incomplete.
pub fn backtranslate(
    llm: &LlmClient,
    rt: &ToolRuntime,
    summary: &RepoSummary,
    origin_name: &str,
    colors: &Colors,
    budget: usize,
) -> Result<Trajectory, LearnError> {
    let root = rt.workspace().root();
    let mut t = Trajectory::new(root);
    t.push(ChatMessage::system(render_system_prompt(root))).unwrap();
    t.metadata.insert(meta::ORIGIN_NAME.into(), json!(origin_name));
    t.metadata.insert(meta::ORIGIN_REPO_ROOT.into(), json!(root.join(origin_name)));
    t.metadata.insert(meta::NEW_PROJECT_ROOT.into(), json!(root.join(NEW_PROJECT)));
    t.metadata.insert(meta::WORKSPACE_ROOT.into(), json!(root));
    let role = AgentRole::FrontendCoder;
    let mut session = AgentSession::new(role, t, budget, role.default_tools());
    let mut staged = Vec::new();
    let mut kinds = Vec::new();
    for (id, kind) in [(PromptId::BacktranslateBackend, "backend"), (PromptId::BacktranslateFrontend, "frontend")] {
        staged.push(session.trajectory.len());
        kinds.push(kind);
        session.push_user(stage_prompt(id, summary, origin_name, colors));
        let outcome = run_agent_loop(&mut session, llm, rt).map_err(|e| LearnError::stage("backtranslate", e))?;
        if outcome == LoopOutcome::BudgetExhausted {
            break;
        }
    }
    let t = &mut session.trajectory;
    t.metadata.insert(meta::STAGED_MESSAGES.into(), json!(staged));
    t.metadata.insert(meta::STAGE_KINDS.into(), Value::from(kinds));
    Ok(session.trajectory)
}
