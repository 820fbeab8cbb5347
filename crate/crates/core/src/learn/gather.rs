use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dev::{run_agent_loop, AgentRole, AgentSession, LoopOutcome};
use crate::llm::{corrective, examples, extract_json, render_prompt, slots, LlmClient, PromptId};
use crate::model::{BackendPlan, ChatMessage, DevelopmentPlan, FrontendPlan, Trajectory};
use crate::tools::ToolRuntime;

use super::LearnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RepoSummary {
    pub title: String,
    pub description: String,
    pub quality_score: u8,
    pub backend_plan: BackendPlan,
    pub frontend_plan: FrontendPlan,
    pub user_instruction: String,
}

impl RepoSummary {
    pub fn plan(&self) -> DevelopmentPlan {
        DevelopmentPlan { backend: self.backend_plan.clone(), frontend: self.frontend_plan.clone() }
    }

    /// Parses the gatherer's JSON. With `lenient`, endpoints listed in the
    /// wrong order are re-sorted instead of rejected.
    pub fn parse(text: &str, lenient: bool) -> Result<Self, String> {
        let value = extract_json(text).map_err(|e| e.to_string())?;
        let quality = value.get("qualityScore").and_then(Value::as_u64);
        if !matches!(quality, Some(0..=5)) {
            return Err("\"qualityScore\" must be an integer from 0 to 5".into());
        }
        let mut summary: RepoSummary = serde_json::from_value(value).map_err(|e| e.to_string())?;
        let mut plan = summary.plan();
        let violations = plan.violations();
        if !violations.is_empty() {
            if lenient && violations.iter().all(|v| v.is_route_order()) {
                plan.backend.sort_static_first();
                summary.backend_plan = plan.backend;
            } else {
                let problems: Vec<String> = violations.iter().map(ToString::to_string).collect();
                return Err(problems.join("; "));
            }
        }
        Ok(summary)
    }
}

pub fn render_info_gathering(repo_root: &std::path::Path) -> String {
    render_prompt(
        PromptId::InfoGathering,
        &slots([
            ("repoRoot", repo_root.display().to_string()),
            ("example", examples::REPO_SUMMARY.trim_end().to_string()),
        ]),
    )
    .expect("info gathering slots are complete")
}

/// Explores the repository with inspect-class tools and returns its
/// summary together with the session log.
pub fn gather_repo_info(
    llm: &LlmClient,
    rt: &ToolRuntime,
    budget: usize,
) -> Result<(RepoSummary, Trajectory), LearnError> {
    let root = rt.workspace().root();
    let mut t = Trajectory::new(root);
    t.push(ChatMessage::user(render_info_gathering(root))).unwrap();
    let role = AgentRole::InfoGatherer;
    let mut session = AgentSession::new(role, t, budget, role.default_tools());
    let stage = |s: &mut AgentSession| run_agent_loop(s, llm, rt).map_err(|e| LearnError::stage("gather", e));
    if stage(&mut session)? == LoopOutcome::BudgetExhausted {
        return Err(LearnError::stage("gather", "tool budget exhausted before the report"));
    }
    match RepoSummary::parse(session.last_assistant_text().unwrap_or(""), false) {
        Ok(s) => Ok((s, session.trajectory)),
        Err(problem) => {
            session.push_user(corrective(&problem));
            stage(&mut session)?;
            let s = RepoSummary::parse(session.last_assistant_text().unwrap_or(""), true)
                .map_err(|p| LearnError::stage("gather", p))?;
            Ok((s, session.trajectory))
        }
    }
}
