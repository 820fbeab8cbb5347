use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::llm::{CompletionRequest, LlmClient, LlmError};
use crate::model::{ChatMessage, ScoreRecord, ToolCall, Trajectory};
use crate::tools::{ToolClass, ToolRuntime, TOOL_NAMES};

pub const DEFAULT_TOOL_BUDGET: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Planner,
    BackendCoder,
    FrontendCoder,
    InfoGatherer,
    Augmenter,
    Judge,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Planner => "planner",
            AgentRole::BackendCoder => "backend_coder",
            AgentRole::FrontendCoder => "frontend_coder",
            AgentRole::InfoGatherer => "info_gatherer",
            AgentRole::Augmenter => "augmenter",
            AgentRole::Judge => "judge",
        }
    }

    /// Default tool set: the backend coder never drives a browser, the
    /// information gatherer only looks, and the planner and judge get none.
    pub fn default_tools(self) -> Vec<String> {
        let all = TOOL_NAMES.iter().map(|s| s.to_string());
        match self {
            AgentRole::Planner | AgentRole::Judge => Vec::new(),
            AgentRole::BackendCoder => all.filter(|n| n != "frontend_test").collect(),
            AgentRole::FrontendCoder | AgentRole::Augmenter => all.collect(),
            AgentRole::InfoGatherer => {
                let registry = crate::tools::ToolRegistry::default();
                registry.names_of_class(ToolClass::Inspect).into_iter().map(str::to_string).collect()
            }
        }
    }
}

/// How a call to [`run_agent_loop`] ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopOutcome {
    /// The assistant replied without tool calls.
    Answered,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct AgentSession {
    pub role: AgentRole,
    pub trajectory: Trajectory,
    tool_budget: usize,
    allowed_tools: Vec<String>,
}

impl AgentSession {
    pub fn new(role: AgentRole, trajectory: Trajectory, tool_budget: usize, allowed_tools: Vec<String>) -> Self {
        Self { role, trajectory, tool_budget, allowed_tools }
    }

    /// Session with the role's default tools and the standard budget.
    pub fn for_role(role: AgentRole, trajectory: Trajectory) -> Self {
        Self::new(role, trajectory, DEFAULT_TOOL_BUDGET, role.default_tools())
    }

    pub fn remaining_budget(&self) -> usize {
        self.tool_budget
    }

    pub fn allowed_tools(&self) -> &[String] {
        &self.allowed_tools
    }

    pub fn push_user(&mut self, content: impl Into<String>) {
        self.trajectory.push(ChatMessage::user(content)).expect("user messages never violate call bookkeeping");
    }

    pub fn last_assistant_text(&self) -> Option<&str> {
        self.trajectory
            .messages()
            .iter()
            .rev()
            .find(|m| m.role == crate::model::Role::Assistant)
            .map(|m| m.content.as_str())
    }
}

/// Drives complete → execute → append until the model stops calling tools
/// or the session budget runs out. Tool failures become error results and
/// never end the loop; only model transport errors do.
pub fn run_agent_loop(session: &mut AgentSession, llm: &LlmClient, rt: &ToolRuntime) -> Result<LoopOutcome, LlmError> {
    let allowed: Vec<&str> = session.allowed_tools.iter().map(String::as_str).collect();
    let schemas = rt.registry().descriptors(&allowed);
    loop {
        let req = CompletionRequest::new(session.trajectory.messages().to_vec()).with_tools(schemas.clone());
        let mut reply = llm.complete(&req)?;
        if reply.tool_calls.is_empty() {
            push(&mut session.trajectory, reply);
            return Ok(LoopOutcome::Answered);
        }
        let truncated = reply.tool_calls.len() > session.tool_budget;
        if truncated {
            log::warn!(
                "{}: dropping {} tool calls beyond the remaining budget",
                session.role.as_str(),
                reply.tool_calls.len() - session.tool_budget
            );
            reply.tool_calls.truncate(session.tool_budget);
        }
        if reply.tool_calls.is_empty() {
            session.trajectory.incomplete = true;
            return Ok(LoopOutcome::BudgetExhausted);
        }
        unique_ids(&session.trajectory, &mut reply.tool_calls);
        let calls = reply.tool_calls.clone();
        push(&mut session.trajectory, reply);
        for call in &calls {
            let step = session.trajectory.tool_result_count();
            let result = execute(session, rt, call);
            for (kind, value) in &result.scores {
                match ScoreRecord::new(*kind, *value, step) {
                    Ok(r) => session.trajectory.score_records.push(r),
                    Err(e) => log::warn!("discarding score from {}: {e}", call.name),
                }
            }
            push(&mut session.trajectory, ChatMessage::tool(&call.id, result.content));
            session.tool_budget -= 1;
        }
        if session.tool_budget == 0 {
            session.trajectory.incomplete = true;
            return Ok(LoopOutcome::BudgetExhausted);
        }
    }
}

fn execute(session: &AgentSession, rt: &ToolRuntime, call: &ToolCall) -> crate::tools::ToolResult {
    if !session.allowed_tools.iter().any(|t| t == &call.name) {
        return crate::tools::ToolResult::error(format!(
            "tool `{}` is not available to this agent; available tools: {}",
            call.name,
            session.allowed_tools.join(", ")
        ));
    }
    if !call.arguments.is_object() {
        let raw = match &call.arguments {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        return crate::tools::ToolResult::error(format!(
            "arguments for {} must be a JSON object; received: {raw}",
            call.name
        ));
    }
    rt.execute(call)
}

fn push(t: &mut Trajectory, m: ChatMessage) {
    t.push(m).expect("loop maintains call bookkeeping");
}

/// Models occasionally reuse ids across turns; rename collisions so every
/// tool result still pairs with exactly one call.
fn unique_ids(t: &Trajectory, calls: &mut [ToolCall]) {
    let mut seen: BTreeSet<String> =
        t.messages().iter().flat_map(|m| m.tool_calls.iter().map(|c| c.id.clone())).collect();
    let mut next = t.tool_call_count();
    for call in calls {
        if call.id.is_empty() || seen.contains(&call.id) {
            loop {
                next += 1;
                let id = format!("call_{next}");
                if !seen.contains(&id) {
                    call.id = id;
                    break;
                }
            }
        }
        seen.insert(call.id.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::Workspace;
    use crate::tools::ToolConfig;
    use serde_json::json;

    fn runtime(dir: &std::path::Path) -> ToolRuntime {
        ToolRuntime::new(Workspace::open(dir).unwrap(), ToolConfig::default())
    }

    fn session(root: &std::path::Path, role: AgentRole, budget: usize) -> AgentSession {
        let mut t = Trajectory::new(root);
        t.push(ChatMessage::system("sys")).unwrap();
        t.push(ChatMessage::user("go")).unwrap();
        AgentSession::new(role, t, budget, role.default_tools())
    }

    #[test]
    fn immediate_answer_ends_after_one_turn() {
        let dir = tempfile::tempdir().unwrap();
        let rt = runtime(dir.path());
        let mut s = session(dir.path(), AgentRole::BackendCoder, 5);
        let llm = LlmClient::scripted([ChatMessage::assistant("nothing to do")]);
        assert_eq!(run_agent_loop(&mut s, &llm, &rt).unwrap(), LoopOutcome::Answered);
        assert_eq!(s.trajectory.len(), 3);
        assert!(!s.trajectory.incomplete);
    }

    #[test]
    fn budget_boundary_marks_incomplete() {
        let dir = tempfile::tempdir().unwrap();
        let rt = runtime(dir.path());
        let mut s = session(dir.path(), AgentRole::BackendCoder, 3);
        let turns = (0..3).map(|i| {
            ChatMessage::assistant_with_calls(
                "",
                vec![ToolCall::new(format!("c{i}"), "list_directory", json!({"path": dir.path()}))],
            )
        });
        let llm = LlmClient::scripted(turns);
        assert_eq!(run_agent_loop(&mut s, &llm, &rt).unwrap(), LoopOutcome::BudgetExhausted);
        assert!(s.trajectory.incomplete);
        assert_eq!(s.trajectory.tool_result_count(), 3);
        assert_eq!(s.remaining_budget(), 0);
    }

    #[test]
    fn calls_beyond_budget_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let rt = runtime(dir.path());
        let mut s = session(dir.path(), AgentRole::BackendCoder, 2);
        let calls =
            (0..4).map(|i| ToolCall::new(format!("c{i}"), "list_directory", json!({"path": dir.path()}))).collect();
        let llm = LlmClient::scripted([ChatMessage::assistant_with_calls("", calls)]);
        assert_eq!(run_agent_loop(&mut s, &llm, &rt).unwrap(), LoopOutcome::BudgetExhausted);
        assert_eq!(s.trajectory.tool_call_count(), 2);
        assert_eq!(s.trajectory.tool_result_count(), 2);
    }

    #[test]
    fn disallowed_tool_is_an_error_result() {
        let dir = tempfile::tempdir().unwrap();
        let rt = runtime(dir.path());
        let mut s = session(dir.path(), AgentRole::BackendCoder, 10);
        let call = ToolCall::new(
            "c1",
            "frontend_test",
            json!({"directory_path": "x", "start_command": "true", "required_ports": [1], "instruction": "look"}),
        );
        let llm =
            LlmClient::scripted([ChatMessage::assistant_with_calls("", vec![call]), ChatMessage::assistant("ok")]);
        run_agent_loop(&mut s, &llm, &rt).unwrap();
        let result = &s.trajectory.messages()[3];
        assert!(result.content.contains("not available"), "{}", result.content);
        assert!(s.trajectory.score_records.is_empty());
    }

    #[test]
    fn reused_ids_are_renamed() {
        let dir = tempfile::tempdir().unwrap();
        let rt = runtime(dir.path());
        let mut s = session(dir.path(), AgentRole::BackendCoder, 10);
        let call = || ToolCall::new("same", "list_directory", json!({"path": dir.path()}));
        let llm = LlmClient::scripted([
            ChatMessage::assistant_with_calls("", vec![call()]),
            ChatMessage::assistant_with_calls("", vec![call()]),
            ChatMessage::assistant("done"),
        ]);
        run_agent_loop(&mut s, &llm, &rt).unwrap();
        assert_eq!(s.trajectory.tool_result_count(), 2);
        assert!(s.trajectory.pending_call_ids().is_empty());
    }

    #[test]
    fn non_object_arguments_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let rt = runtime(dir.path());
        let mut s = session(dir.path(), AgentRole::BackendCoder, 10);
        let llm = LlmClient::scripted([
            ChatMessage::assistant_with_calls("", vec![ToolCall::new("c", "read_file", json!("{bad"))]),
            ChatMessage::assistant("done"),
        ]);
        run_agent_loop(&mut s, &llm, &rt).unwrap();
        assert!(s.trajectory.messages()[3].content.contains("JSON object"));
    }

    #[test]
    fn role_tool_sets() {
        assert!(!AgentRole::BackendCoder.default_tools().contains(&"frontend_test".to_string()));
        assert_eq!(AgentRole::FrontendCoder.default_tools().len(), 10);
        assert!(AgentRole::Planner.default_tools().is_empty());
        let inspect = AgentRole::InfoGatherer.default_tools();
        assert!(inspect.contains(&"read_file".to_string()));
        assert!(!inspect.contains(&"write_file".to_string()));
    }
}
