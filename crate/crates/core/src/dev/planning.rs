use std::sync::OnceLock;

use regex::Regex;

use crate::llm::{complete_structured, examples, extract_json, render_prompt, slots, LlmClient, PromptId};
use crate::model::{ChatMessage, DevelopmentPlan};

use super::DevError;

pub const DEFAULT_COLOR_RULE: &str =
    "Background color must be `white` and component color `navy` when relevant to UX guidelines.";
pub const INSTRUCTION_COLOR_RULE: &str = "Follow the color theme stated in the product concept.";

fn color_words() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)#[0-9a-f]{3}(?:[0-9a-f]{3})?\b|\b(?:rgb|hsl)a?\(|\b(?:colou?r(?:s|ed)?|palette|theme|black|white|gr[ae]y|silver|red|crimson|maroon|orange|amber|yellow|gold|green|emerald|olive|lime|teal|cyan|turquoise|blue|navy|indigo|purple|violet|magenta|pink|rose|brown|beige|cream|pastel)\b",
        )
        .unwrap()
    })
}

/// The STYLE rule for the planning prompt: the fixed white/navy default
/// unless the instruction already talks about colours.
pub fn color_theme_rule(instruction: &str) -> &'static str {
    if color_words().is_match(instruction) {
        INSTRUCTION_COLOR_RULE
    } else {
        DEFAULT_COLOR_RULE
    }
}

pub fn render_planning_prompt(instruction: &str) -> String {
    render_prompt(
        PromptId::Planning,
        &slots([
            ("colorThemeRule", color_theme_rule(instruction)),
            ("examples", examples::PLAN.trim_end()),
            ("userInstruction", instruction),
        ]),
    )
    .expect("planning prompt slots are complete")
}

/// Single tool-less completion. Any invariant violation earns one
/// corrective re-ask. If only route order is still wrong afterwards the
/// endpoints are stably re-sorted static-first; anything else is an error.
pub fn generate_plan(llm: &LlmClient, instruction: &str) -> Result<DevelopmentPlan, DevError> {
    if instruction.trim().is_empty() {
        return Err(DevError::phase("planning", "instruction is empty"));
    }
    let messages = vec![ChatMessage::user(render_planning_prompt(instruction))];
    let strict = |text: &str| {
        let plan = parse_plan(text)?;
        let problems: Vec<String> = plan.violations().iter().map(ToString::to_string).collect();
        if problems.is_empty() {
            Ok(plan)
        } else {
            Err(problems.join("; "))
        }
    };
    let lenient = |text: &str| {
        let mut plan = parse_plan(text)?;
        let violations = plan.violations();
        if violations.iter().all(|v| v.is_route_order()) {
            plan.backend.sort_static_first();
            Ok(plan)
        } else {
            let problems: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(problems.join("; "))
        }
    };
    complete_structured_staged(llm, messages, strict, lenient).map_err(|e| DevError::phase("planning", e))
}

/// Like `complete_structured` but with a different acceptance test for the
/// second attempt.
fn complete_structured_staged(
    llm: &LlmClient,
    messages: Vec<ChatMessage>,
    first: impl Fn(&str) -> Result<DevelopmentPlan, String>,
    second: impl Fn(&str) -> Result<DevelopmentPlan, String>,
) -> Result<DevelopmentPlan, String> {
    let attempt = std::cell::Cell::new(0);
    let parse = |text: &str| {
        let n = attempt.get();
        attempt.set(n + 1);
        if n == 0 {
            first(text)
        } else {
            second(text)
        }
    };
    complete_structured(llm, messages, parse).map(|(plan, _)| plan).map_err(|e| e.to_string())
}

fn parse_plan(text: &str) -> Result<DevelopmentPlan, String> {
    let value = extract_json(text).map_err(|e| e.to_string())?;
    DevelopmentPlan::from_value(&value).map_err(|e| e.to_string())
}
