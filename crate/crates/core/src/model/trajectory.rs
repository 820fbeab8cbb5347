use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::message::{ChatMessage, Role};
use super::score::ScoreRecord;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("tool message references unknown or already answered call id `{0}`")]
    UnknownToolCallId(String),
    #[error("{0:?} message carries tool calls")]
    ToolCallsOnNonAssistant(Role),
    #[error("duplicate tool call id `{0}`")]
    DuplicateCallId(String),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateIds {
    pub frontend: Option<String>,
    pub backend: Option<String>,
}

/// Ordered, append-only log of one agent session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    messages: Vec<ChatMessage>,
    pub workspace: PathBuf,
    #[serde(default)]
    pub template_ids: TemplateIds,
    #[serde(default)]
    pub score_records: Vec<ScoreRecord>,
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
    /// Set when the session stopped on its tool budget.
    #[serde(default)]
    pub incomplete: bool,
}

impl Trajectory {
    pub fn new(workspace: impl Into<PathBuf>) -> Self {
        Self { workspace: workspace.into(), ..Self::default() }
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last(&self) -> Option<&ChatMessage> {
        self.messages.last()
    }

    /// Appends a message after checking tool-call bookkeeping.
    pub fn push(&mut self, message: ChatMessage) -> Result<(), TrajectoryError> {
        check_append(&self.messages, &message)?;
        self.messages.push(message);
        Ok(())
    }

    /// Call ids emitted by assistant messages that have no tool result yet.
    pub fn pending_call_ids(&self) -> BTreeSet<String> {
        pending_ids(&self.messages)
    }

    pub fn tool_call_count(&self) -> usize {
        self.messages.iter().map(|m| m.tool_calls.len()).sum()
    }

    pub fn tool_result_count(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Tool).count()
    }

    /// Rebuilds a trajectory from an edited message list (used by cleaning
    /// passes), validating the same invariants `push` enforces.
    pub fn with_messages(&self, messages: Vec<ChatMessage>) -> Result<Self, TrajectoryError> {
        let mut out = Self { messages: Vec::with_capacity(messages.len()), ..self.clone() };
        for m in messages {
            out.push(m)?;
        }
        Ok(out)
    }

    pub fn into_messages(self) -> Vec<ChatMessage> {
        self.messages
    }

    /// One chat message per line.
    pub fn to_jsonl(&self) -> String {
        messages_to_jsonl(&self.messages)
    }

    pub fn from_jsonl(text: &str, workspace: impl Into<PathBuf>) -> Result<Self, TrajectoryError> {
        let mut t = Self::new(workspace);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let msg: ChatMessage =
                serde_json::from_str(line).map_err(|source| TrajectoryError::Parse { line: i + 1, source })?;
            t.push(msg)?;
        }
        Ok(t)
    }
}

pub fn messages_to_jsonl(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&m.to_json_line());
        out.push('\n');
    }
    out
}

fn pending_ids(messages: &[ChatMessage]) -> BTreeSet<String> {
    let mut pending = BTreeSet::new();
    for m in messages {
        for c in &m.tool_calls {
            pending.insert(c.id.clone());
        }
        if let Some(id) = &m.tool_call_id {
            pending.remove(id);
        }
    }
    pending
}

fn check_append(history: &[ChatMessage], message: &ChatMessage) -> Result<(), TrajectoryError> {
    if message.role != Role::Assistant && !message.tool_calls.is_empty() {
        return Err(TrajectoryError::ToolCallsOnNonAssistant(message.role));
    }
    if message.role == Role::Tool {
        let id = message.tool_call_id.clone().unwrap_or_default();
        if !pending_ids(history).contains(&id) {
            return Err(TrajectoryError::UnknownToolCallId(id));
        }
    }
    if message.role == Role::Assistant {
        let seen: BTreeSet<&str> = history.iter().flat_map(|m| m.tool_calls.iter().map(|c| c.id.as_str())).collect();
        let mut fresh = BTreeSet::new();
        for c in &message.tool_calls {
            if seen.contains(c.id.as_str()) || !fresh.insert(c.id.as_str()) {
                return Err(TrajectoryError::DuplicateCallId(c.id.clone()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::message::ToolCall;
    use serde_json::json;

    fn call(id: &str) -> ToolCall {
        ToolCall::new(id, "read_file", json!({"path": "/w/x"}))
    }

    #[test]
    fn tool_results_must_follow_their_call() {
        let mut t = Trajectory::new("/w");
        t.push(ChatMessage::user("go")).unwrap();
        assert!(matches!(t.push(ChatMessage::tool("c1", "x")), Err(TrajectoryError::UnknownToolCallId(_))));
        t.push(ChatMessage::assistant_with_calls("", vec![call("c1")])).unwrap();
        assert_eq!(t.pending_call_ids().len(), 1);
        t.push(ChatMessage::tool("c1", "content")).unwrap();
        assert!(t.pending_call_ids().is_empty());
        assert!(t.push(ChatMessage::tool("c1", "again")).is_err());
    }

    #[test]
    fn call_ids_are_unique_across_the_log() {
        let mut t = Trajectory::new("/w");
        t.push(ChatMessage::assistant_with_calls("", vec![call("c1")])).unwrap();
        t.push(ChatMessage::tool("c1", "ok")).unwrap();
        assert!(matches!(
            t.push(ChatMessage::assistant_with_calls("", vec![call("c1")])),
            Err(TrajectoryError::DuplicateCallId(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut t = Trajectory::new("/w");
        t.push(ChatMessage::system("sys")).unwrap();
        t.push(ChatMessage::assistant_with_calls("thinking", vec![call("c1")])).unwrap();
        t.push(ChatMessage::tool("c1", "line1\nline2")).unwrap();
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 3);
        let back = Trajectory::from_jsonl(&text, "/w").unwrap();
        assert_eq!(back.messages(), t.messages());
        assert_eq!(back.tool_call_count(), 1);
        assert_eq!(back.tool_result_count(), 1);
    }
}
