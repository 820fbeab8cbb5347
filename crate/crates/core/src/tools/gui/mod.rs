//! Browser driving for GUI agents: an abstract driver, a scripted driver for
//! fixtures, a DevTools-protocol driver, and the shared agent session loop.

mod cdp;
mod scripted;
mod session;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use cdp::{CdpDriver, CdpDriverFactory};
pub use scripted::{Effect, ScriptedDriver, ScriptedDriverFactory, ScriptedElement, ScriptedPage, ScriptedSite};
pub use session::{run_gui_session, GuiOutcome, GuiSessionConfig};

#[derive(Debug, Error)]
pub enum GuiError {
    #[error("browser connection failed: {0}")]
    Connect(String),
    #[error("browser protocol error: {0}")]
    Protocol(String),
    #[error("no element matches `{0}`")]
    NoSuchElement(String),
    #[error("{0}")]
    Action(String),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSummary {
    pub role: String,
    #[serde(default)]
    pub selector: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub text: String,
    pub elements: Vec<ElementSummary>,
    /// Base64 PNG.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screenshot: Option<String>,
}

impl Observation {
    pub fn render(&self) -> String {
        let mut out = format!("URL: {}\nTitle: {}\n", self.url, self.title);
        if !self.text.is_empty() {
            out.push_str(&format!("Visible text: {}\n", self.text));
        }
        out.push_str("Interactive elements:\n");
        if self.elements.is_empty() {
            out.push_str("(none)\n");
        }
        for e in &self.elements {
            match &e.selector {
                Some(s) => out.push_str(&format!("- {} {} \"{}\"\n", e.role, s, e.text)),
                None => out.push_str(&format!("- {} \"{}\"\n", e.role, e.text)),
            }
        }
        out
    }

    pub fn screenshot_data_url(&self) -> Option<String> {
        self.screenshot.as_ref().map(|b| format!("data:image/png;base64,{b}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsoleEntry {
    pub level: String,
    pub text: String,
}

impl ConsoleEntry {
    pub fn error(text: impl Into<String>) -> Self {
        Self { level: "error".into(), text: text.into() }
    }

    pub fn is_error(&self) -> bool {
        self.level.eq_ignore_ascii_case("error")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScrollDirection {
    Up,
    Down,
}

pub trait GuiDriver: Send {
    fn navigate(&mut self, url: &str) -> Result<(), GuiError>;
    fn observe(&mut self) -> Result<Observation, GuiError>;
    fn click(&mut self, target: &str) -> Result<(), GuiError>;
    fn type_text(&mut self, target: &str, text: &str) -> Result<(), GuiError>;
    fn scroll(&mut self, direction: ScrollDirection) -> Result<(), GuiError>;
    /// Browser console entries recorded since the previous call.
    fn take_console(&mut self) -> Vec<ConsoleEntry>;
    fn close(&mut self) {}
}

pub trait GuiDriverFactory: Send + Sync {
    /// Opens a fresh browser page for the site served at `base_url`.
    fn open(&self, base_url: &str) -> Result<Box<dyn GuiDriver>, GuiError>;
}

/// Function descriptors for the GUI agent's actions.
pub fn action_schemas() -> Vec<Value> {
    let obj = |props: Value, required: &[&str]| json!({"type": "object", "properties": props, "required": required, "additionalProperties": false});
    vec![
        json!({"name": "navigate", "description": "Open a URL or a path on the site.",
               "parameters": obj(json!({"url": {"type": "string", "minLength": 1}}), &["url"])}),
        json!({"name": "click", "description": "Click an element by CSS selector or visible text.",
               "parameters": obj(json!({"target": {"type": "string", "minLength": 1}}), &["target"])}),
        json!({"name": "type", "description": "Type text into an input identified by CSS selector or label.",
               "parameters": obj(json!({"target": {"type": "string", "minLength": 1}, "text": {"type": "string"}}), &["target", "text"])}),
        json!({"name": "scroll", "description": "Scroll the page.",
               "parameters": obj(json!({"direction": {"enum": ["up", "down"]}}), &["direction"])}),
        json!({"name": "done", "description": "Finish testing and give the answer.",
               "parameters": obj(json!({"answer": {"type": "string"}}), &["answer"])}),
    ]
}
