use regex::Regex;
use serde_json::Value;

use super::{action_schemas, GuiDriver, GuiError, Observation, ScrollDirection};
use crate::llm::{render_prompt, slots, CompletionRequest, LlmClient, PromptId, Slots};
use crate::model::ChatMessage;
use crate::sandbox::{ServiceHandle, Stream};

#[derive(Debug, Clone)]
pub struct GuiSessionConfig {
    pub max_actions: usize,
    /// Service stderr lines matching any of these interrupt the session.
    pub error_patterns: Vec<Regex>,
    /// Whether runtime errors interrupt the agent. Judges keep going.
    pub interrupt_on_error: bool,
}

impl GuiSessionConfig {
    pub fn new(max_actions: usize, patterns: &[String]) -> Self {
        Self {
            max_actions,
            error_patterns: patterns.iter().filter_map(|p| Regex::new(p).ok()).collect(),
            interrupt_on_error: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GuiOutcome {
    pub messages: Vec<ChatMessage>,
    pub actions: usize,
    pub answer: Option<String>,
    pub error_logs: Option<String>,
    pub error_analysis: Option<String>,
    pub last_observation: Option<Observation>,
    pub screenshots: Vec<String>,
}

impl GuiOutcome {
    pub fn premature(&self) -> bool {
        self.error_logs.is_some()
    }
}

fn user_with_shot(text: String, obs: &Observation) -> ChatMessage {
    let msg = ChatMessage::user(text);
    match obs.screenshot_data_url() {
        Some(url) => msg.with_images(vec![url]),
        None => msg,
    }
}

fn perform(driver: &mut dyn GuiDriver, name: &str, args: &Value) -> Result<(), GuiError> {
    let s = |k: &str| args.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
    match name {
        "navigate" => driver.navigate(&s("url")),
        "click" => driver.click(&s("target")),
        "type" => driver.type_text(&s("target"), &s("text")),
        "scroll" => driver.scroll(if s("direction") == "up" { ScrollDirection::Up } else { ScrollDirection::Down }),
        other => Err(GuiError::Action(format!("unknown action `{other}`"))),
    }
}

/// Runs a GUI agent until it calls `done`, answers without acting, hits the
/// action cap, or (when enabled) the site raises a runtime error.
///
/// `task` renders the opening user message around the first observation.
pub fn run_gui_session(
    llm: &LlmClient,
    driver: &mut dyn GuiDriver,
    task: impl Fn(&str) -> Result<String, crate::llm::PromptError>,
    monitor: Option<&ServiceHandle>,
    cfg: &GuiSessionConfig,
) -> Result<GuiOutcome, GuiError> {
    let schemas = action_schemas();
    let mut out = GuiOutcome::default();
    let mut console_seen = monitor.map_or(0, |m| m.console().len());
    driver.take_console();

    let first = driver.observe()?;
    let system = render_prompt(PromptId::GuiAgentSystem, &Slots::new()).expect("constant prompt");
    let opening = task(&first.render()).map_err(|e| GuiError::Action(e.to_string()))?;
    out.messages.push(ChatMessage::system(system));
    out.messages.push(user_with_shot(opening, &first));
    out.screenshots.extend(first.screenshot.clone());
    out.last_observation = Some(first);

    loop {
        let limit_reached = out.actions >= cfg.max_actions;
        let mut req = CompletionRequest::new(out.messages.clone());
        if !limit_reached {
            req = req.with_tools(schemas.clone());
        }
        let reply = llm.complete(&req)?;
        let calls = reply.tool_calls.clone();
        if calls.is_empty() || limit_reached {
            out.answer = Some(reply.content.clone());
            out.messages.push(ChatMessage::assistant(reply.content));
            break;
        }
        out.messages.push(reply);

        let mut finished = None;
        let mut shot = None;
        for call in &calls {
            if finished.is_some() {
                out.messages.push(ChatMessage::tool(&call.id, "Skipped: testing already finished."));
                continue;
            }
            if call.name == "done" {
                let answer = call.arguments.get("answer").and_then(Value::as_str).unwrap_or_default();
                finished = Some(answer.to_string());
                out.messages.push(ChatMessage::tool(&call.id, "Testing finished."));
                continue;
            }
            if out.actions >= cfg.max_actions {
                out.messages
                    .push(ChatMessage::tool(&call.id, "Interaction limit reached; no further actions are possible."));
                continue;
            }
            out.actions += 1;
            let status = match perform(driver, &call.name, &call.arguments) {
                Ok(()) => "Action succeeded.".to_string(),
                Err(GuiError::Llm(e)) => return Err(GuiError::Llm(e)),
                Err(e) => format!("Action failed: {e}"),
            };
            let obs = driver.observe()?;
            out.messages.push(ChatMessage::tool(&call.id, format!("{status}\n\nObservation:\n{}", obs.render())));
            out.screenshots.extend(obs.screenshot.clone());
            shot = Some(obs.clone());
            out.last_observation = Some(obs);
        }
        if let Some(answer) = finished {
            out.answer = Some(answer);
            break;
        }

        let mut errors: Vec<String> = driver
            .take_console()
            .into_iter()
            .filter(|e| e.is_error())
            .map(|e| format!("[browser console] {}", e.text))
            .collect();
        if let Some(m) = monitor {
            let fresh = m.console().lines_from(console_seen);
            console_seen += fresh.len();
            errors.extend(
                fresh
                    .iter()
                    .filter(|l| l.stream == Stream::Stderr && cfg.error_patterns.iter().any(|r| r.is_match(&l.text)))
                    .map(|l| format!("[terminal] {}", l.text)),
            );
        }
        if cfg.interrupt_on_error && !errors.is_empty() {
            let logs = errors.join("\n");
            let prompt = render_prompt(PromptId::GuiErrorInterrupt, &slots([("errorLogs", logs.as_str())]))
                .expect("slots provided");
            out.messages.push(ChatMessage::user(prompt));
            let analysis = llm.complete(&CompletionRequest::new(out.messages.clone()))?;
            out.messages.push(ChatMessage::assistant(analysis.content.clone()));
            out.error_analysis = Some(analysis.content);
            out.error_logs = Some(logs);
            break;
        }
        if let Some(obs) = shot.filter(|o| o.screenshot.is_some()) {
            out.messages.push(user_with_shot("Screenshot after the last action.".into(), &obs));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ToolCall;
    use crate::tools::gui::{ScriptedDriver, ScriptedSite};
    use serde_json::json;
    use std::sync::Arc;

    fn site() -> Arc<ScriptedSite> {
        Arc::new(
            serde_json::from_value(json!({"pages": {
                "/": {"title": "Home", "elements": [
                    {"role": "link", "selector": "#about", "text": "About", "on_click": {"kind": "navigate", "to": "/about"}},
                    {"role": "button", "selector": "#boom", "text": "Break", "on_click": {"kind": "console_error", "message": "TypeError: boom"}}
                ]},
                "/about": {"title": "About"}
            }}))
            .unwrap(),
        )
    }

    fn click(id: &str, target: &str) -> ChatMessage {
        ChatMessage::assistant_with_calls("", vec![ToolCall::new(id, "click", json!({"target": target}))])
    }

    fn task(obs: &str) -> Result<String, crate::llm::PromptError> {
        render_prompt(PromptId::GuiTestTask, &slots([("instruction", "check about"), ("observation", obs)]))
    }

    #[test]
    fn clean_session_ends_with_done() {
        let llm = LlmClient::scripted([
            click("c1", "#about"),
            ChatMessage::assistant_with_calls("", vec![ToolCall::new("c2", "done", json!({"answer": "YES"}))]),
        ]);
        let mut d = ScriptedDriver::new(site(), "http://localhost:9");
        let out = run_gui_session(&llm, &mut d, task, None, &GuiSessionConfig::new(15, &[])).unwrap();
        assert_eq!(out.answer.as_deref(), Some("YES"));
        assert_eq!(out.actions, 1);
        assert!(!out.premature());
        assert_eq!(out.last_observation.unwrap().title, "About");
    }

    #[test]
    fn console_error_interrupts_with_analysis() {
        let llm = LlmClient::scripted([
            click("c1", "#boom"),
            ChatMessage::assistant("Clicking Break caused TypeError: boom"),
        ]);
        let mut d = ScriptedDriver::new(site(), "http://localhost:9");
        let out = run_gui_session(&llm, &mut d, task, None, &GuiSessionConfig::new(15, &[])).unwrap();
        assert!(out.premature());
        assert_eq!(out.error_logs.as_deref(), Some("[browser console] TypeError: boom"));
        assert!(out.messages.iter().any(|m| m.content.contains("which action led to the error")));
    }

    #[test]
    fn action_cap_forces_an_answer() {
        let mut turns: Vec<ChatMessage> = (0..3).map(|i| click(&format!("c{i}"), "#nothing")).collect();
        turns.push(ChatMessage::assistant("NO"));
        let llm = LlmClient::scripted(turns);
        let mut d = ScriptedDriver::new(site(), "http://localhost:9");
        let out = run_gui_session(&llm, &mut d, task, None, &GuiSessionConfig::new(3, &[])).unwrap();
        assert_eq!(out.actions, 3);
        assert_eq!(out.answer.as_deref(), Some("NO"));
        let tool_msgs = out.messages.iter().filter(|m| m.role == crate::model::Role::Tool).count();
        assert_eq!(tool_msgs, 3);
    }
}
