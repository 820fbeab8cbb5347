//! Chat messages in the chat-completion wire shape.
//!
//! A message serializes to exactly one JSON object of the form used by
//! OpenAI-compatible chat endpoints: tool-call arguments are carried as a
//! JSON-encoded string and image attachments turn `content` into a parts
//! array. The same shape is used for trajectory JSONL and SFT records.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// A single function call requested by the assistant.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// Parsed arguments. Arguments that were not valid JSON on the wire are
    /// kept verbatim as a JSON string so validation can report them.
    pub arguments: Value,
}

impl ToolCall {
    pub fn new(id: impl Into<String>, name: impl Into<String>, arguments: Value) -> Self {
        Self { id: id.into(), name: name.into(), arguments }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub tool_calls: Vec<ToolCall>,
    pub tool_call_id: Option<String>,
    /// Image attachments as `data:` URLs (GUI observations, screenshots).
    pub images: Vec<String>,
}

impl ChatMessage {
    fn bare(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into(), tool_calls: Vec::new(), tool_call_id: None, images: Vec::new() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::bare(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::bare(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::bare(Role::Assistant, content)
    }

    pub fn assistant_with_calls(content: impl Into<String>, calls: Vec<ToolCall>) -> Self {
        Self { tool_calls: calls, ..Self::bare(Role::Assistant, content) }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self { tool_call_id: Some(call_id.into()), ..Self::bare(Role::Tool, content) }
    }

    pub fn with_images(mut self, images: Vec<String>) -> Self {
        self.images = images;
        self
    }

    pub fn has_tool_calls(&self) -> bool {
        !self.tool_calls.is_empty()
    }

    /// Serializes to a single-line JSON object.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("chat message serialization is infallible")
    }
}

#[derive(Serialize, Deserialize)]
struct WireFunction {
    name: String,
    arguments: Value,
}

#[derive(Serialize, Deserialize)]
struct WireToolCall {
    id: String,
    #[serde(rename = "type", default = "function_kind")]
    kind: String,
    function: WireFunction,
}

fn function_kind() -> String {
    "function".to_string()
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum WirePart {
    Text { text: String },
    ImageUrl { image_url: WireImage },
}

#[derive(Serialize, Deserialize)]
struct WireImage {
    url: String,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WireContent {
    Text(String),
    Parts(Vec<WirePart>),
}

#[derive(Serialize, Deserialize)]
struct WireMessage {
    role: Role,
    #[serde(default)]
    content: Option<WireContent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tool_calls: Vec<WireToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool_call_id: Option<String>,
}

impl Serialize for ChatMessage {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let content = if self.images.is_empty() {
            WireContent::Text(self.content.clone())
        } else {
            let mut parts = vec![WirePart::Text { text: self.content.clone() }];
            parts
                .extend(self.images.iter().map(|url| WirePart::ImageUrl { image_url: WireImage { url: url.clone() } }));
            WireContent::Parts(parts)
        };
        let tool_calls = self
            .tool_calls
            .iter()
            .map(|call| WireToolCall {
                id: call.id.clone(),
                kind: function_kind(),
                function: WireFunction {
                    name: call.name.clone(),
                    arguments: Value::String(match &call.arguments {
                        Value::String(raw) => raw.clone(),
                        other => other.to_string(),
                    }),
                },
            })
            .collect();
        WireMessage { role: self.role, content: Some(content), tool_calls, tool_call_id: self.tool_call_id.clone() }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ChatMessage {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireMessage::deserialize(deserializer)?;
        let (content, images) = match wire.content {
            None => (String::new(), Vec::new()),
            Some(WireContent::Text(text)) => (text, Vec::new()),
            Some(WireContent::Parts(parts)) => {
                let mut text = String::new();
                let mut images = Vec::new();
                for part in parts {
                    match part {
                        WirePart::Text { text: t } => text.push_str(&t),
                        WirePart::ImageUrl { image_url } => images.push(image_url.url),
                    }
                }
                (text, images)
            }
        };
        let tool_calls = wire
            .tool_calls
            .into_iter()
            .map(|call| {
                let arguments = match call.function.arguments {
                    Value::String(raw) => serde_json::from_str(&raw).unwrap_or(Value::String(raw)),
                    other => other,
                };
                ToolCall { id: call.id, name: call.function.name, arguments }
            })
            .collect::<Vec<_>>();
        if wire.role != Role::Assistant && !tool_calls.is_empty() {
            return Err(D::Error::custom("only assistant messages may carry tool_calls"));
        }
        if wire.role == Role::Tool && wire.tool_call_id.is_none() {
            return Err(D::Error::custom("tool message without tool_call_id"));
        }
        Ok(ChatMessage { role: wire.role, content, tool_calls, tool_call_id: wire.tool_call_id, images })
    }
}
