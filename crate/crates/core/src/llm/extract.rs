use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("no parseable JSON in model output")]
pub struct ExtractError {
    pub raw: String,
}

/// Pulls the first JSON value out of free-form model output.
///
/// Fenced ```json blocks win, in order. Without a usable fence the first
/// balanced top-level object anywhere in the text is taken.
pub fn extract_json(text: &str) -> Result<Value, ExtractError> {
    for block in json_fences(text) {
        if let Ok(v) = serde_json::from_str::<Value>(block.trim()) {
            return Ok(v);
        }
    }
    for (pos, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[pos..]).into_iter::<Value>();
        if let Some(Ok(v @ Value::Object(_))) = stream.next() {
            return Ok(v);
        }
    }
    Err(ExtractError { raw: text.to_string() })
}

fn json_fences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```json") {
        let body = &rest[start + 7..];
        let Some(end) = body.find("```") else { break };
        out.push(&body[..end]);
        rest = &body[end + 3..];
    }
    out
}
