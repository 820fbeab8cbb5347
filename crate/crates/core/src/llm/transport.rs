use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionRequest, LlmError};
use crate::model::{ChatMessage, Role};

/// Where a role's completions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointDescriptor {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    /// When set, completions are replayed from this JSONL transcript.
    pub scripted: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for EndpointDescriptor {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: None,
            scripted: None,
            timeout_secs: 600,
        }
    }
}

impl EndpointDescriptor {
    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        Self { scripted: Some(path.into()), ..Self::default() }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &CompletionRequest) -> Result<ChatMessage, LlmError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTurn {
    pub message: ChatMessage,
    pub fingerprint: Option<String>,
}

/// Canned assistant turns consumed strictly in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptedTranscript {
    pub turns: Vec<ScriptedTurn>,
}

impl ScriptedTranscript {
    pub fn new(messages: impl IntoIterator<Item = ChatMessage>) -> Self {
        Self { turns: messages.into_iter().map(|message| ScriptedTurn { message, fingerprint: None }).collect() }
    }

    /// One wire-shape assistant message per line; an optional
    /// `fingerprint` key pins the request that must precede it.
    pub fn from_jsonl(text: &str) -> Result<Self, LlmError> {
        let mut turns = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |e: String| LlmError::Transcript(format!("line {}: {e}", n + 1));
            let mut value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let fingerprint = value
                .as_object_mut()
                .and_then(|o| o.remove("fingerprint"))
                .and_then(|f| f.as_str().map(str::to_string));
            let message: ChatMessage = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            if message.role != Role::Assistant {
                return Err(bad("transcript turns must be assistant messages".into()));
            }
            turns.push(ScriptedTurn { message, fingerprint });
        }
        Ok(Self { turns })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            let mut value = serde_json::to_value(&turn.message).expect("message serializes");
            if let (Some(fp), Some(obj)) = (&turn.fingerprint, value.as_object_mut()) {
                obj.insert("fingerprint".into(), Value::String(fp.clone()));
            }
            out.push_str(&value.to_string());
            out.push('\n');
        }
        out
    }
}

pub struct ScriptedTransport {
    state: Mutex<(ScriptedTranscript, usize)>,
}

impl ScriptedTransport {
    pub fn new(transcript: ScriptedTranscript) -> Self {
        Self { state: Mutex::new((transcript, 0)) }
    }

    pub fn remaining(&self) -> usize {
        let state = self.state.lock().unwrap();
        state.0.turns.len() - state.1
    }

    pub fn consumed(&self) -> usize {
        self.state.lock().unwrap().1
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, req: &CompletionRequest) -> Result<ChatMessage, LlmError> {
        let mut state = self.state.lock().unwrap();
        let (transcript, cursor) = &mut *state;
        let turn = transcript.turns.get(*cursor).ok_or(LlmError::TranscriptExhausted)?;
        if let Some(expected) = &turn.fingerprint {
            let actual = req.fingerprint();
            if &actual != expected {
                return Err(LlmError::ReplayDivergence { turn: *cursor + 1, expected: expected.clone(), actual });
            }
        }
        *cursor += 1;
        Ok(turn.message.clone())
    }
}

/// Wraps another transport and keeps every exchange, fingerprinted, so a
/// live run can be frozen into a replayable transcript.
pub struct RecordingTransport<T> {
    inner: T,
    turns: Mutex<Vec<ScriptedTurn>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, turns: Mutex::new(Vec::new()) }
    }

    pub fn transcript(&self) -> ScriptedTranscript {
        ScriptedTranscript { turns: self.turns.lock().unwrap().clone() }
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&self, req: &CompletionRequest) -> Result<ChatMessage, LlmError> {
        let reply = self.inner.send(req)?;
        self.turns.lock().unwrap().push(ScriptedTurn { message: reply.clone(), fingerprint: Some(req.fingerprint()) });
        Ok(reply)
    }
}

/// OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpTransport {
    endpoint: EndpointDescriptor,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(endpoint: EndpointDescriptor) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(endpoint.timeout_secs.max(1)))
            .build()
            .map_err(|e| LlmError::Transport { message: e.to_string(), retryable: false })?;
        Ok(Self { endpoint, client })
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.endpoint.model,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        if !req.tool_schemas.is_empty() {
            let tools: Vec<Value> =
                req.tool_schemas.iter().map(|s| json!({"type": "function", "function": s})).collect();
            body["tools"] = Value::Array(tools);
        }
        body
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &CompletionRequest) -> Result<ChatMessage, LlmError> {
        let url = format!("{}/chat/completions", self.endpoint.base_url.trim_end_matches('/'));
        let mut builder = self.client.post(&url).json(&self.body(req));
        if let Some(var) = &self.endpoint.api_key_env {
            let token = std::env::var(var).map_err(|_| LlmError::Transport {
                message: format!("environment variable {var} is not set"),
                retryable: false,
            })?;
            builder = builder.bearer_auth(token);
        }
        let resp = builder.send().map_err(|e| LlmError::Transport { message: e.to_string(), retryable: true })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport { message: e.to_string(), retryable: true })?;
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err(LlmError::Transport { message: format!("HTTP {status}: {text}"), retryable });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| LlmError::BadResponse(e.to_string()))?;
        let message = value
            .pointer("/choices/0/message")
            .cloned()
            .ok_or_else(|| LlmError::BadResponse("response has no choices[0].message".into()))?;
        serde_json::from_value(message).map_err(|e| LlmError::BadResponse(e.to_string()))
    }
}
