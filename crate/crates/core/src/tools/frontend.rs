use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::gui::{run_gui_session, GuiSessionConfig};
use super::{ports_arg, str_arg, ToolResult, ToolRuntime};
use crate::llm::{render_prompt, slots, CompletionRequest, PromptId, Slots};
use crate::model::{ChatMessage, ScoreKind};
use crate::sandbox::{spawn_service, SpawnOptions};

pub const SUMMARY_SECTIONS: [&str; 5] = [
    "GUI Agent Trajectory Description",
    "Errors / Misbehaviour and Triggering Actions",
    "GUI Agent Testing Score",
    "Website Visual Description",
    "Appearance Grade",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiSummary {
    pub trajectory_description: String,
    pub errors: String,
    pub functionality_score: u8,
    pub visual_description: String,
    pub appearance_score: u8,
}

fn first_grade(text: &str) -> Option<u8> {
    text.split(|c: char| !c.is_ascii_digit())
        .find(|t| !t.is_empty())
        .and_then(|t| t.parse::<u8>().ok())
        .filter(|g| (1..=5).contains(g))
}

/// Splits a five-section report. Titles may carry list numbers or markdown
/// emphasis; each section runs until the next title.
pub fn parse_gui_summary(text: &str) -> Result<GuiSummary, String> {
    let mut starts = Vec::new();
    let mut from = 0;
    for title in SUMMARY_SECTIONS {
        let pos = text[from..].find(title).ok_or_else(|| format!("missing section \"{title}\""))? + from;
        let after = pos + title.len();
        let colon = text[after..]
            .find(':')
            .filter(|&i| text[after..after + i].trim_matches(|c: char| c == '*' || c.is_whitespace()).is_empty())
            .ok_or_else(|| format!("section \"{title}\" lacks a colon"))?;
        starts.push((pos, after + colon + 1));
        from = after + colon + 1;
    }
    let body = |i: usize| {
        let end = starts.get(i + 1).map_or(text.len(), |s| s.0);
        let raw = &text[starts[i].1..end];
        // drop the next section's list number or emphasis that precedes its title
        let raw = match starts.get(i + 1) {
            Some(_) => raw
                .trim_end_matches(|c: char| c.is_whitespace() || c == '*' || c == '#')
                .trim_end_matches(|c: char| c.is_ascii_digit() || c == '.'),
            None => raw,
        };
        raw.trim_matches(|c: char| c.is_whitespace() || c == '*').to_string()
    };
    let functionality = body(2);
    let appearance = body(4);
    Ok(GuiSummary {
        trajectory_description: body(0),
        errors: body(1),
        functionality_score: first_grade(&functionality)
            .ok_or_else(|| format!("\"GUI Agent Testing Score\" has no grade 1-5: {functionality}"))?,
        visual_description: body(3),
        appearance_score: first_grade(&appearance)
            .ok_or_else(|| format!("\"Appearance Grade\" has no grade 1-5: {appearance}"))?,
    })
}

pub(super) fn frontend_test(rt: &ToolRuntime, args: &Value) -> ToolResult {
    let Some(gui) = rt.gui.clone() else {
        return ToolResult::error("frontend_test is unavailable: no GUI driver is configured");
    };
    let directory = str_arg(args, "directory_path").unwrap_or(".");
    let start_command = str_arg(args, "start_command").unwrap_or_default();
    let instruction = str_arg(args, "instruction").unwrap_or_default();
    let ports = ports_arg(args);
    let cfg = rt.config();

    let opts = SpawnOptions { env: rt.env.clone(), registry: rt.ports.clone(), ..SpawnOptions::default() };
    let handle = match spawn_service(rt.workspace(), directory, start_command, &ports, &opts) {
        Ok(h) => h,
        Err(e) => return ToolResult::error(e.to_string()),
    };
    if let Err(e) = handle.await_ready(cfg.ready_timeout()) {
        handle.terminate_with_grace(cfg.grace());
        return ToolResult::error(e.to_string());
    }
    let landing = format!("http://localhost:{}", ports[0]);
    let result = (|| -> Result<ToolResult, String> {
        let mut driver = gui.drivers.open(&landing).map_err(|e| e.to_string())?;
        driver.navigate(&format!("{landing}/")).map_err(|e| e.to_string())?;
        let session_cfg = GuiSessionConfig::new(cfg.gui_max_actions, &cfg.error_patterns);
        let task = |obs: &str| {
            render_prompt(PromptId::GuiTestTask, &slots([("instruction", instruction), ("observation", obs)]))
        };
        let outcome =
            run_gui_session(&gui.agent, driver.as_mut(), task, Some(&handle), &session_cfg).map_err(|e| e.to_string());
        driver.close();
        let outcome = outcome?;

        let (prefix, errors, scale) = match &outcome.error_logs {
            Some(logs) => (
                render_prompt(PromptId::GuiPrefixPremature, &slots([("logBlock", logs.as_str())])).unwrap(),
                PromptId::GuiErrorsPremature,
                PromptId::GuiScorePremature,
            ),
            None => (
                render_prompt(PromptId::GuiPrefixNatural, &Slots::new()).unwrap(),
                PromptId::GuiErrorsNatural,
                PromptId::GuiScoreNatural,
            ),
        };
        let summary_prompt = render_prompt(
            PromptId::GuiSummary,
            &slots([
                ("prefix", prefix.clone()),
                ("errorsDescription", render_prompt(errors, &Slots::new()).unwrap()),
                ("functionalityScale", render_prompt(scale, &Slots::new()).unwrap()),
            ]),
        )
        .unwrap();
        let mut messages = outcome.messages.clone();
        let mut ask = ChatMessage::user(summary_prompt);
        if let Some(shot) = outcome.last_observation.as_ref().and_then(|o| o.screenshot_data_url()) {
            ask = ask.with_images(vec![shot]);
        }
        messages.push(ask);
        let mut parsed = None;
        for attempt in 0..2 {
            let reply = gui.agent.complete(&CompletionRequest::new(messages.clone())).map_err(|e| e.to_string())?;
            match parse_gui_summary(&reply.content) {
                Ok(s) => {
                    parsed = Some((s, reply.content));
                    break;
                }
                Err(problem) if attempt == 0 => {
                    messages.push(ChatMessage::assistant(reply.content));
                    let fix = render_prompt(PromptId::Corrective, &slots([("problem", problem)])).unwrap();
                    messages.push(ChatMessage::user(fix));
                }
                Err(problem) => return Err(format!("GUI summary unusable after one re-ask: {problem}")),
            }
        }
        let (summary, text) = parsed.expect("loop returns or parses");
        let content =
            if outcome.premature() { format!("{prefix}\n\n{}", text.trim()) } else { text.trim().to_string() };
        let structured = serde_json::to_value(&summary).expect("summary serializes");
        Ok(ToolResult::ok(content)
            .with_structured(structured)
            .with_score(ScoreKind::FrontendFunctionality, summary.functionality_score as f64)
            .with_score(ScoreKind::Appearance, summary.appearance_score as f64))
    })();
    handle.terminate_with_grace(cfg.grace());
    result.unwrap_or_else(ToolResult::error)
}
