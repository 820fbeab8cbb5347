use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::llm::{complete_structured, extract_json, render_prompt, slots, LlmClient, PromptId};
use crate::model::{ChatMessage, TemplateKind, TemplateRegistry};

use super::DevError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateChoice {
    pub template_name: String,
    pub is_pure_frontend: bool,
}

/// One template per kind. `backend` is `None` for pure frontend sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSelection {
    pub frontend: String,
    pub backend: Option<String>,
    pub is_pure_frontend: bool,
}

/// Picks the frontend template (always via the model, which also decides
/// whether a backend is needed) and then the backend template, asking the
/// model again only when more than one backend is registered.
pub fn choose_templates(
    llm: &LlmClient,
    instruction: &str,
    registry: &TemplateRegistry,
) -> Result<TemplateSelection, DevError> {
    let frontends: Vec<_> = registry.of_kind(TemplateKind::Frontend).collect();
    let backends: Vec<_> = registry.of_kind(TemplateKind::Backend).collect();
    if frontends.is_empty() || backends.is_empty() {
        return Err(DevError::phase(
            "template_choice",
            "the template registry needs at least one frontend and one backend template",
        ));
    }
    let frontend = ask(llm, instruction, registry, TemplateKind::Frontend)?;
    if frontend.is_pure_frontend {
        return Ok(TemplateSelection { frontend: frontend.template_name, backend: None, is_pure_frontend: true });
    }
    let backend = if backends.len() == 1 {
        backends[0].name.clone()
    } else {
        ask(llm, instruction, registry, TemplateKind::Backend)?.template_name
    };
    Ok(TemplateSelection { frontend: frontend.template_name, backend: Some(backend), is_pure_frontend: false })
}

fn ask(
    llm: &LlmClient,
    instruction: &str,
    registry: &TemplateRegistry,
    kind: TemplateKind,
) -> Result<TemplateChoice, DevError> {
    let descriptions: Vec<String> =
        registry.of_kind(kind).map(|t| format!("- {}: {}", t.name, t.description.trim())).collect();
    let prompt = render_prompt(
        PromptId::ChooseTemplate,
        &slots([("userInstruction", instruction.to_string()), ("templateDescriptions", descriptions.join("\n"))]),
    )?;
    let parse = |text: &str| parse_choice(text, registry, kind);
    let (choice, _) = complete_structured(llm, vec![ChatMessage::user(prompt)], parse)
        .map_err(|e| DevError::phase("template_choice", e.to_string()))?;
    Ok(choice)
}

fn parse_choice(text: &str, registry: &TemplateRegistry, kind: TemplateKind) -> Result<TemplateChoice, String> {
    let value = extract_json(text).map_err(|e| e.to_string())?;
    let name = value
        .get("template_name")
        .and_then(Value::as_str)
        .ok_or("the JSON object needs a string field \"template_name\"")?;
    let pure = match value.get("is_pure_frontend") {
        Some(Value::Bool(b)) => *b,
        None => false,
        Some(other) => return Err(format!("\"is_pure_frontend\" must be true or false, got {other}")),
    };
    match registry.get(name) {
        Some(t) if t.kind == kind => Ok(TemplateChoice { template_name: t.name.clone(), is_pure_frontend: pure }),
        _ => {
            let options: Vec<&str> = registry.of_kind(kind).map(|t| t.name.as_str()).collect();
            Err(format!("unknown template \"{name}\"; choose one of: {}", options.join(", ")))
        }
    }
}
