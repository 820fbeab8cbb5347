use serde::{Deserialize, Serialize};

use crate::llm::{corrective, render_prompt, slots, LlmClient, PromptId};
use crate::model::{ChatMessage, DevelopmentPlan, TemplateDescriptor, Trajectory};
use crate::tools::ToolRuntime;

use super::agent::{run_agent_loop, AgentRole, AgentSession, LoopOutcome};
use super::DevError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiTest {
    pub url: String,
    pub method: String,
    pub sent_data: String,
    pub header: String,
    pub response: String,
    pub console_state: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoTable {
    pub table_name: String,
    pub data_structure: String,
}

/// The backend agent's closing report, handed verbatim to the frontend agent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSummary {
    pub features: Vec<String>,
    pub successful_api_tests: Vec<ApiTest>,
    pub demo_data: Vec<DemoTable>,
    pub known_issues: String,
    /// The message text the summary was parsed from.
    pub raw: String,
}

const API_KEYS: [&str; 6] =
    ["url:", "request method:", "sent data:", "header:", "received response:", "console state:"];

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Features,
    Tests,
    Demo,
    Issues,
}

impl BackendSummary {
    pub fn parse(text: &str) -> Result<Self, String> {
        let body = text.trim_start().strip_prefix("Summary:").ok_or("the summary must begin with \"Summary: \"")?;
        let mut out = BackendSummary { raw: text.trim().to_string(), ..Self::default() };
        let mut section = Section::None;
        let mut issues: Vec<String> = Vec::new();
        for line in body.lines() {
            let trimmed = line.trim();
            let heading = [
                ("Features Implemented:", Section::Features),
                ("Successful API Tests:", Section::Tests),
                ("Demo Data in Database:", Section::Demo),
                ("Known Issues / Limitations:", Section::Issues),
            ]
            .into_iter()
            .find_map(|(h, s)| trimmed.strip_prefix(h).map(|rest| (s, rest.trim())));
            if let Some((s, rest)) = heading {
                section = s;
                if s == Section::Issues && !rest.is_empty() {
                    issues.push(rest.to_string());
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let item = trimmed.strip_prefix("- ").or_else(|| trimmed.strip_prefix("* "));
            match (section, item) {
                (Section::Features, Some(item)) => out.features.push(item.to_string()),
                (Section::Tests, Some(item)) => match parse_api_test(item) {
                    Some(t) => out.successful_api_tests.push(t),
                    None => log::debug!("unstructured API test line: {item}"),
                },
                (Section::Demo, Some(item)) => out.demo_data.push(parse_demo(item)),
                (Section::Issues, _) => issues.push(trimmed.to_string()),
                _ => {}
            }
        }
        out.known_issues = issues.join("\n");
        Ok(out)
    }
}

fn parse_api_test(item: &str) -> Option<ApiTest> {
    let mut starts = Vec::with_capacity(API_KEYS.len());
    let mut from = 0;
    for key in API_KEYS {
        let at = from + item[from..].find(key)?;
        starts.push((at, at + key.len()));
        from = at + key.len();
    }
    let field = |i: usize| {
        let end = starts.get(i + 1).map(|s| s.0).unwrap_or(item.len());
        item[starts[i].1..end].trim().trim_end_matches(['.', ';']).trim().to_string()
    };
    Some(ApiTest {
        url: field(0),
        method: field(1),
        sent_data: field(2),
        header: field(3),
        response: field(4),
        console_state: field(5),
    })
}

fn parse_demo(item: &str) -> DemoTable {
    let name_key = "table name:";
    let ds_key = "data structure:";
    match (item.find(name_key), item.find(ds_key)) {
        (Some(n), Some(d)) if n < d => DemoTable {
            table_name: item[n + name_key.len()..d].trim().trim_end_matches(';').trim().to_string(),
            data_structure: item[d + ds_key.len()..].trim().to_string(),
        },
        _ => DemoTable { table_name: item.to_string(), data_structure: String::new() },
    }
}

pub fn render_system_prompt(project_root: &std::path::Path) -> String {
    render_prompt(PromptId::CodingSystem, &slots([("projectRoot", project_root.display().to_string())]))
        .expect("system prompt slots are complete")
}

pub fn render_backend_start(instruction: &str, plan: &DevelopmentPlan, template: &TemplateDescriptor) -> String {
    render_prompt(
        PromptId::BackendStart,
        &slots([
            ("userInstruction", instruction.to_string()),
            ("backendPlan", pretty(&plan.backend)),
            ("templateType", template.name.clone()),
            ("projectStructure", template.project_structure.trim_end().to_string()),
            ("developmentWorkflow", template.dev_workflow.join("\n")),
            ("databaseConfiguration", template.database_configuration()),
            ("additionalReminders", reminders(template)),
        ]),
    )
    .expect("backend start slots are complete")
}

pub const NO_BACKEND: &str = "None. This is a pure frontend website without a backend.";

pub fn render_frontend_start(
    instruction: &str,
    plan: &DevelopmentPlan,
    template: &TemplateDescriptor,
    summary: Option<&BackendSummary>,
) -> String {
    render_prompt(
        PromptId::FrontendStart,
        &slots([
            ("userInstruction", instruction.to_string()),
            ("frontendPlan", pretty(&plan.frontend)),
            ("backendSummary", summary.map(|s| s.raw.clone()).unwrap_or_else(|| NO_BACKEND.to_string())),
            ("templateType", template.name.clone()),
            ("projectStructure", template.project_structure.trim_end().to_string()),
            ("developmentWorkflow", template.dev_workflow.join("\n")),
            ("additionalReminders", reminders(template)),
        ]),
    )
    .expect("frontend start slots are complete")
}

pub fn validation_prompt(kind: crate::model::TemplateKind) -> String {
    let id = match kind {
        crate::model::TemplateKind::Backend => PromptId::BackendValidation,
        crate::model::TemplateKind::Frontend => PromptId::FrontendValidation,
    };
    render_prompt(id, &Default::default()).expect("validation prompts have no slots")
}

fn reminders(template: &TemplateDescriptor) -> String {
    let r = template.additional_reminders.trim();
    if r.is_empty() {
        "None".to_string()
    } else {
        r.to_string()
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plans serialize")
}

fn seeded(rt: &ToolRuntime, role: AgentRole, start: String, budget: usize) -> AgentSession {
    let mut t = Trajectory::new(rt.workspace().root());
    t.push(ChatMessage::system(render_system_prompt(rt.workspace().root()))).unwrap();
    t.push(ChatMessage::user(start)).unwrap();
    AgentSession::new(role, t, budget, role.default_tools())
}

/// Runs the staged prompts in order, stopping early if the budget runs out.
fn run_stages(
    session: &mut AgentSession,
    llm: &LlmClient,
    rt: &ToolRuntime,
    follow_ups: &[String],
    phase: &'static str,
) -> Result<bool, DevError> {
    let loop_once =
        |s: &mut AgentSession| run_agent_loop(s, llm, rt).map_err(|e| DevError::phase(phase, e.to_string()));
    if loop_once(session)? == LoopOutcome::BudgetExhausted {
        return Ok(false);
    }
    for prompt in follow_ups {
        session.push_user(prompt.clone());
        if loop_once(session)? == LoopOutcome::BudgetExhausted {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Backend agent: start, validate, summarize. The summary must begin with
/// "Summary:"; one corrective follow-up is allowed.
pub fn run_backend_phase(
    llm: &LlmClient,
    rt: &ToolRuntime,
    plan: &DevelopmentPlan,
    instruction: &str,
    template: &TemplateDescriptor,
    budget: usize,
) -> Result<(Trajectory, BackendSummary), DevError> {
    let start = render_backend_start(instruction, plan, template);
    let mut session = seeded(rt, AgentRole::BackendCoder, start, budget);
    session.trajectory.template_ids.backend = Some(template.name.clone());
    let stages = [
        validation_prompt(crate::model::TemplateKind::Backend),
        render_prompt(PromptId::BackendSummary, &Default::default())?,
    ];
    if !run_stages(&mut session, llm, rt, &stages, "backend")? {
        return Err(DevError::phase_with(
            "backend",
            "tool budget exhausted before the backend summary",
            session.trajectory,
        ));
    }
    let parsed = BackendSummary::parse(session.last_assistant_text().unwrap_or(""));
    let summary = match parsed {
        Ok(s) => s,
        Err(problem) => {
            session.push_user(corrective(&problem));
            run_agent_loop(&mut session, llm, rt).map_err(|e| DevError::phase("backend", e.to_string()))?;
            match BackendSummary::parse(session.last_assistant_text().unwrap_or("")) {
                Ok(s) => s,
                Err(problem) => return Err(DevError::phase_with("backend", problem, session.trajectory)),
            }
        }
    };
    Ok((session.trajectory, summary))
}

/// Frontend agent: start (with the backend summary embedded) then validate.
pub fn run_frontend_phase(
    llm: &LlmClient,
    rt: &ToolRuntime,
    plan: &DevelopmentPlan,
    instruction: &str,
    template: &TemplateDescriptor,
    summary: Option<&BackendSummary>,
    budget: usize,
) -> Result<Trajectory, DevError> {
    let start = render_frontend_start(instruction, plan, template, summary);
    let mut session = seeded(rt, AgentRole::FrontendCoder, start, budget);
    session.trajectory.template_ids.frontend = Some(template.name.clone());
    let stages = [validation_prompt(crate::model::TemplateKind::Frontend)];
    run_stages(&mut session, llm, rt, &stages, "frontend")?;
    Ok(session.trajectory)
}
