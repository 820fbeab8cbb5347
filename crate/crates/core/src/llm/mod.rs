//! Chat-completion gateway: request validation, context guarding, bounded
//! retries, and pluggable transports (HTTP or scripted replay).

mod extract;
mod prompts;
mod transport;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ChatMessage, Role};

pub use extract::{extract_json, ExtractError};
pub use prompts::{examples, render_prompt, slots, PromptError, PromptId, Slots};
pub use transport::{
    EndpointDescriptor, HttpTransport, RecordingTransport, ScriptedTranscript, ScriptedTransport, ScriptedTurn,
    Transport,
};

pub const DEFAULT_CONTEXT_TOKENS: usize = 131_072;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("context overflow: ~{estimated} tokens exceeds limit {limit}")]
    ContextOverflow { estimated: usize, limit: usize },
    #[error("transcript exhausted")]
    TranscriptExhausted,
    #[error("replay divergence at turn {turn}: expected {expected}, got {actual}")]
    ReplayDivergence { turn: usize, expected: String, actual: String },
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("bad response: {0}")]
    BadResponse(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport { retryable: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    /// Function descriptors: `{name, description, parameters}`.
    pub tool_schemas: Vec<Value>,
    pub temperature: f64,
    pub max_context_tokens: usize,
}

impl CompletionRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self { messages, tool_schemas: Vec::new(), temperature: 0.0, max_context_tokens: DEFAULT_CONTEXT_TOKENS }
    }

    pub fn with_tools(mut self, schemas: Vec<Value>) -> Self {
        self.tool_schemas = schemas;
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!("temperature {} < 0", self.temperature)));
        }
        let mut seen = BTreeSet::new();
        for schema in &self.tool_schemas {
            let name = schema
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| LlmError::InvalidRequest("tool schema without name".into()))?;
            if !seen.insert(name) {
                return Err(LlmError::InvalidRequest(format!("duplicate tool schema {name}")));
            }
        }
        Ok(())
    }

    /// Rough token count: four characters per token, images at a flat rate.
    pub fn estimated_tokens(&self) -> usize {
        let chars: usize = self
            .messages
            .iter()
            .map(|m| {
                m.content.len()
                    + m.tool_calls.iter().map(|c| c.name.len() + c.arguments.to_string().len()).sum::<usize>()
            })
            .sum();
        let schema_chars: usize = self.tool_schemas.iter().map(|s| s.to_string().len()).sum();
        let images: usize = self.messages.iter().map(|m| m.images.len()).sum();
        (chars + schema_chars).div_ceil(4) + images * 1024
    }

    /// Hex sha256 over the serialized message list.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&self.messages).expect("messages serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

/// Cheap to clone; clones share the transport.
#[derive(Clone)]
pub struct LlmClient {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient").field("retry", &self.retry).finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport, retry: RetryPolicy::default() }
    }

    pub fn scripted(messages: impl IntoIterator<Item = ChatMessage>) -> Self {
        Self::new(Arc::new(ScriptedTransport::new(ScriptedTranscript::new(messages))))
    }

    /// Builds the transport an endpoint describes.
    pub fn from_endpoint(endpoint: &EndpointDescriptor) -> Result<Self, LlmError> {
        match &endpoint.scripted {
            Some(path) => Ok(Self::new(Arc::new(ScriptedTransport::new(ScriptedTranscript::load(path)?)))),
            None => Ok(Self::new(Arc::new(HttpTransport::new(endpoint.clone())?))),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<ChatMessage, LlmError> {
        req.validate()?;
        let estimated = req.estimated_tokens();
        if estimated > req.max_context_tokens {
            return Err(LlmError::ContextOverflow { estimated, limit: req.max_context_tokens });
        }
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.send(req) {
                Ok(reply) if reply.role == Role::Assistant => return Ok(reply),
                Ok(reply) => {
                    return Err(LlmError::BadResponse(format!("expected assistant reply, got {:?}", reply.role)))
                }
                Err(e) if e.is_retryable() && attempt < self.retry.attempts => {
                    let delay = self.retry.base_delay * 2u32.pow(attempt - 1);
                    log::warn!("completion attempt {attempt} failed: {e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum StructuredError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{problem}")]
    Invalid { problem: String, reply: String },
}

/// Tool-less completion whose reply must parse. A failed parse earns one
/// corrective follow-up; the second failure is final. Returns the parsed
/// value plus the full exchange, including any failed attempt.
pub fn complete_structured<T>(
    llm: &LlmClient,
    mut messages: Vec<ChatMessage>,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<(T, Vec<ChatMessage>), StructuredError> {
    for attempt in 0..2 {
        let reply = llm.complete(&CompletionRequest::new(messages.clone()))?;
        let content = reply.content.clone();
        messages.push(reply);
        match parse(&content) {
            Ok(v) => return Ok((v, messages)),
            Err(problem) if attempt == 0 => messages.push(ChatMessage::user(corrective(&problem))),
            Err(problem) => return Err(StructuredError::Invalid { problem, reply: content }),
        }
    }
    unreachable!()
}

/// The follow-up message sent after an unusable structured reply.
pub fn corrective(problem: &str) -> String {
    render_prompt(PromptId::Corrective, &slots([("problem", problem)])).expect("corrective prompt has one slot")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl Transport for Flaky {
        fn send(&self, _req: &CompletionRequest) -> Result<ChatMessage, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(LlmError::Transport { message: "reset".into(), retryable: true })
            } else {
                Ok(ChatMessage::assistant("ok"))
            }
        }
    }

    fn fast(failures: u32) -> (Arc<Flaky>, LlmClient) {
        let t = Arc::new(Flaky { failures, calls: AtomicU32::new(0) });
        let client = LlmClient::new(t.clone()).with_retry(RetryPolicy { attempts: 3, base_delay: Duration::ZERO });
        (t, client)
    }

    #[test]
    fn scripted_first_turn_is_returned_verbatim() {
        let canned = ChatMessage::assistant("canned reply");
        let client = LlmClient::scripted([canned.clone()]);
        let req = CompletionRequest::new(vec![ChatMessage::user("hi")]);
        assert_eq!(client.complete(&req).unwrap(), canned);
        assert_eq!(client.complete(&req).unwrap_err(), LlmError::TranscriptExhausted);
    }

    #[test]
    fn transport_errors_retry_up_to_three_attempts() {
        let req = CompletionRequest::new(vec![ChatMessage::user("hi")]);
        let (t, client) = fast(2);
        assert_eq!(client.complete(&req).unwrap().content, "ok");
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);

        let (t, client) = fast(3);
        assert!(client.complete(&req).unwrap_err().is_retryable());
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn overflow_is_fatal_and_never_sent() {
        let (t, client) = fast(0);
        let mut req = CompletionRequest::new(vec![ChatMessage::user("x".repeat(400))]);
        req.max_context_tokens = 50;
        assert!(matches!(client.complete(&req), Err(LlmError::ContextOverflow { estimated: 100, limit: 50 })));
        assert_eq!(t.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn request_validation() {
        let (_, client) = fast(0);
        assert!(client.complete(&CompletionRequest::new(vec![])).is_err());
        let req = CompletionRequest::new(vec![ChatMessage::user("x")])
            .with_tools(vec![json!({"name": "glob"}), json!({"name": "glob"})]);
        assert!(matches!(client.complete(&req), Err(LlmError::InvalidRequest(_))));
    }

    #[test]
    fn complete_does_not_mutate_request() {
        let client = LlmClient::scripted([ChatMessage::assistant("a")]);
        let req = CompletionRequest::new(vec![ChatMessage::user("hi")]);
        let before = req.clone();
        client.complete(&req).unwrap();
        assert_eq!(req, before);
    }
}
