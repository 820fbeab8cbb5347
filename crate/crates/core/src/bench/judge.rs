use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dev::{run_agent_loop, AgentRole, AgentSession};
use crate::llm::{complete_structured, corrective, examples, extract_json, render_prompt, slots, LlmClient, PromptId};
use crate::model::{ApiEndpoint, ChatMessage, Trajectory};
use crate::tools::gui::{run_gui_session, GuiSessionConfig};
use crate::tools::{GuiDriverFactory, ToolClass, ToolRegistry, ToolRuntime};

use super::cases::{Judgement, TestCase, Verdict};
use super::db::{render_statements, DbConfig, DbError, DbLogWindow, DbSnapshot};

/// Interaction cap for GUI judges.
pub const GUI_JUDGE_ACTIONS: usize = 15;

fn inspect_tools() -> Vec<String> {
    ToolRegistry::default().names_of_class(ToolClass::Inspect).into_iter().map(String::from).collect()
}

fn regex(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).unwrap())
}

/// Reads a GUI judge's closing answer. A leading verdict word wins;
/// otherwise the last upper-case verdict in the text.
pub fn parse_gui_answer(text: &str) -> Option<Judgement> {
    static LEAD: OnceLock<Regex> = OnceLock::new();
    static ANY: OnceLock<Regex> = OnceLock::new();
    let word = |w: &str| match w.to_ascii_uppercase().as_str() {
        "YES" => Some(Judgement::Yes),
        "PARTIAL" => Some(Judgement::Partial),
        "NO" => Some(Judgement::No),
        _ => None,
    };
    if let Some(c) = regex(&LEAD, r"(?i)^[\s*_`#>:\-]*(?:answer\s*:\s*)?(yes|partial|no)\b").captures(text) {
        return word(&c[1]);
    }
    regex(&ANY, r"\b(YES|PARTIAL|NO)\b").captures_iter(text).last().and_then(|c| word(&c[1]))
}

/// `Database Interaction Correctness: YES|NO`.
pub fn parse_db_correctness(text: &str) -> Result<bool, String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = regex(&RE, r"(?i)Database Interaction Correctness\W*\s*:?\s*\W*(YES|NO)\b");
    match re.captures_iter(text).last() {
        Some(c) => Ok(c[1].eq_ignore_ascii_case("yes")),
        None => {
            Err("end with the line `Database Interaction Correctness: YES` or `Database Interaction Correctness: NO`"
                .into())
        }
    }
}

/// `Final Judgement: YES|NO`. PARTIAL is not a backend verdict.
pub fn parse_final_judgement(text: &str) -> Result<Judgement, String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = regex(&RE, r"(?i)Final Judge?ment\W*\s*:?\s*\W*(YES|NO|PARTIAL)\b");
    match re.captures_iter(text).last().map(|c| c[1].to_ascii_uppercase()) {
        Some(w) if w == "YES" => Ok(Judgement::Yes),
        Some(w) if w == "NO" => Ok(Judgement::No),
        Some(_) => Err("PARTIAL is not allowed here; answer `Final Judgement: YES` or `Final Judgement: NO`".into()),
        None => Err("end with the line `Final Judgement: YES` or `Final Judgement: NO`".into()),
    }
}

/// Fenced `{"answer": "Yes"|"No"}`.
pub fn parse_db_answer(text: &str) -> Result<bool, String> {
    let v = extract_json(text).map_err(|e| e.to_string())?;
    match v.get("answer").and_then(Value::as_str).map(str::to_ascii_lowercase).as_deref() {
        Some("yes") => Ok(true),
        Some("no") => Ok(false),
        _ => Err("the JSON object must be {\"answer\": \"Yes\"} or {\"answer\": \"No\"}".into()),
    }
}

/// `Grade: n` with n from 1 to 5.
pub fn parse_grade(text: &str) -> Result<u8, String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = regex(&RE, r"(?i)Grade\W*\s*:\s*\W*(\d+)");
    match re.captures_iter(text).last().and_then(|c| c[1].parse::<u8>().ok()) {
        Some(g @ 1..=5) => Ok(g),
        Some(g) => Err(format!("grade {g} is outside 1-5; end with `Grade: n` where n is 1 to 5")),
        None => Err("end with the line `Grade: n` where n is 1 to 5".into()),
    }
}

/// Statements captured for one case, or why there are none.
pub struct CaseLog {
    window: Result<DbLogWindow, DbError>,
}

impl CaseLog {
    pub fn open(db: &DbConfig) -> Self {
        Self { window: DbLogWindow::open(db) }
    }

    /// Log text for the validation prompt plus a note when capture failed.
    pub fn close(self) -> (String, Option<String>) {
        let closed = self.window.and_then(|mut w| w.close());
        match closed {
            Ok(statements) => (render_statements(&statements), None),
            Err(e) => (format!("(no database log is available: {e})"), Some(e.to_string())),
        }
    }
}

/// Asks the judge whether the captured statements fit the case. An answer
/// that never parses fails the check.
fn validate_db(llm: &LlmClient, messages: &mut Vec<ChatMessage>, prompt: String) -> (bool, Option<String>) {
    messages.push(ChatMessage::user(prompt));
    match complete_structured(llm, messages.clone(), parse_db_correctness) {
        Ok((ok, exchange)) => {
            *messages = exchange;
            (ok, None)
        }
        Err(e) => (false, Some(format!("database validation: {e}"))),
    }
}

fn join_reasons(reasons: impl IntoIterator<Item = Option<String>>) -> Option<String> {
    let parts: Vec<String> = reasons.into_iter().flatten().collect();
    (!parts.is_empty()).then(|| parts.join("; "))
}

/// Frontend case against a running site: a capped GUI session, then the
/// database-interaction check over the statements logged meanwhile.
pub fn run_frontend_case(
    site: &str,
    landing: &str,
    case: &TestCase,
    judge: &LlmClient,
    drivers: &dyn GuiDriverFactory,
    db: &DbConfig,
    max_actions: usize,
) -> Verdict {
    let log = CaseLog::open(db);
    let session = (|| {
        let mut driver = drivers.open(landing)?;
        driver.navigate(&format!("{}/", landing.trim_end_matches('/')))?;
        let cfg = GuiSessionConfig { interrupt_on_error: false, ..GuiSessionConfig::new(max_actions, &[]) };
        let max = max_actions.to_string();
        let task = |obs: &str| {
            render_prompt(
                PromptId::BenchFrontendStart,
                &slots([
                    ("task", case.task()),
                    ("expectedResult", case.expected()),
                    ("maxInteractions", max.as_str()),
                    ("observation", obs),
                ]),
            )
        };
        let out = run_gui_session(judge, driver.as_mut(), task, None, &cfg);
        driver.close();
        out
    })();
    let (logs, log_note) = log.close();
    let outcome = match session {
        Ok(o) => o,
        Err(e) => {
            let mut v = Verdict::failed(site, case, format!("GUI session failed: {e}"));
            v.db_logs = Some(logs);
            return v;
        }
    };
    let answer = outcome.answer.clone().unwrap_or_default();
    let (raw, answer_note) = match parse_gui_answer(&answer) {
        Some(j) => (j, None),
        None => (Judgement::No, Some(format!("unreadable judge answer: {answer:?}"))),
    };
    let mut messages = outcome.messages;
    let prompt = render_prompt(
        PromptId::BenchFrontendDbValidation,
        &slots([("task", case.task()), ("databaseLogs", logs.as_str())]),
    )
    .expect("slots provided");
    let (ok, check_note) = validate_db(judge, &mut messages, prompt);
    let mut v = Verdict::new(site, case, raw, Some(ok));
    v.reason = join_reasons([answer_note, log_note, check_note]);
    v.db_logs = Some(logs);
    v.judge_trajectory = Trajectory::new(landing).with_messages(messages).unwrap_or_default();
    v
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogDatabase {
    #[serde(rename = "type", default)]
    pub kind: String,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub db_host: Option<String>,
    #[serde(default)]
    pub db_port: Option<Value>,
    #[serde(default)]
    pub db_username: Option<String>,
    #[serde(default)]
    pub db_password: Option<String>,
    #[serde(default)]
    pub db_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiCatalog {
    pub backend_port: Option<u16>,
    pub api_endpoints: Vec<ApiEndpoint>,
    #[serde(default)]
    pub database: CatalogDatabase,
}

impl ApiCatalog {
    pub fn parse(text: &str) -> Result<Self, String> {
        let v = extract_json(text).map_err(|e| e.to_string())?;
        if v.get("api_endpoints").is_none_or(|e| !e.is_array()) {
            return Err("\"api_endpoints\" must be a list (empty when none exist)".into());
        }
        serde_json::from_value(v).map_err(|e| e.to_string())
    }
}

/// Inspect-only session over the site's code that lists its endpoints and
/// database settings. One re-ask on malformed JSON.
pub fn gather_api_catalog(
    judge: &LlmClient,
    rt: &ToolRuntime,
    budget: usize,
) -> Result<(ApiCatalog, Trajectory), String> {
    let root = rt.workspace().root();
    let prompt = render_prompt(
        PromptId::BenchApiInfoGathering,
        &slots([("repoRoot", root.display().to_string()), ("example", examples::API_CATALOG.trim_end().to_string())]),
    )
    .expect("slots provided");
    let mut t = Trajectory::new(root);
    t.push(ChatMessage::user(prompt)).unwrap();
    let mut session = AgentSession::new(AgentRole::InfoGatherer, t, budget, inspect_tools());
    let run = |s: &mut AgentSession| run_agent_loop(s, judge, rt).map_err(|e| format!("API catalog session: {e}"));
    run(&mut session)?;
    let parsed = match ApiCatalog::parse(session.last_assistant_text().unwrap_or("")) {
        Ok(c) => c,
        Err(problem) => {
            session.push_user(corrective(&problem));
            run(&mut session)?;
            ApiCatalog::parse(session.last_assistant_text().unwrap_or("")).map_err(|p| format!("API catalog: {p}"))?
        }
    };
    Ok((parsed, session.trajectory))
}

/// How the judge is told to start the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub directory: String,
    pub start_command: String,
    pub ports: Vec<u16>,
}

/// Backend case: the judge drives backend_test (plus read/search tools),
/// then checks the statements logged during its session.
#[allow(clippy::too_many_arguments)]
pub fn run_backend_case(
    site: &str,
    backend: &ServiceSpec,
    catalog: &ApiCatalog,
    case: &TestCase,
    judge: &LlmClient,
    rt: &ToolRuntime,
    db: &DbConfig,
    budget: usize,
) -> Verdict {
    let ports: Vec<String> = backend.ports.iter().map(u16::to_string).collect();
    let mut prompt = render_prompt(
        PromptId::BenchBackendStart,
        &slots([
            ("startCommand", backend.start_command.as_str()),
            ("directoryPath", backend.directory.as_str()),
            ("requiredPorts", ports.join(", ").as_str()),
            ("task", case.task()),
            ("expectedResult", case.expected()),
        ]),
    )
    .expect("slots provided");
    let catalog_json = serde_json::to_string_pretty(catalog).unwrap_or_default();
    prompt.push_str(&format!("\n\nBackend API information:\n```json\n{catalog_json}\n```"));

    let mut tools = vec!["backend_test".to_string()];
    tools.extend(inspect_tools());
    let mut t = Trajectory::new(rt.workspace().root());
    t.push(ChatMessage::user(prompt)).unwrap();
    let mut session = AgentSession::new(AgentRole::Judge, t, budget, tools);

    let log = CaseLog::open(db);
    let mut judged = run_agent_loop(&mut session, judge, rt)
        .map_err(|e| e.to_string())
        .and_then(|_| parse_final_judgement(session.last_assistant_text().unwrap_or("")));
    if let Err(problem) = &judged {
        session.push_user(corrective(problem));
        judged = run_agent_loop(&mut session, judge, rt)
            .map_err(|e| e.to_string())
            .and_then(|_| parse_final_judgement(session.last_assistant_text().unwrap_or("")));
    }
    let (logs, log_note) = log.close();
    let (raw, judge_note) = match judged {
        Ok(j) => (j, None),
        Err(e) => (Judgement::No, Some(format!("no final judgement: {e}"))),
    };
    let mut messages = session.trajectory.messages().to_vec();
    let prompt = render_prompt(
        PromptId::BenchBackendDbValidation,
        &slots([("task", case.task()), ("expectedResult", case.expected()), ("databaseLogs", logs.as_str())]),
    )
    .expect("slots provided");
    let (ok, check_note) = validate_db(judge, &mut messages, prompt);
    let mut v = Verdict::new(site, case, raw, Some(ok));
    v.reason = join_reasons([judge_note, log_note, check_note]);
    v.db_logs = Some(logs);
    v.judge_trajectory = session.trajectory.with_messages(messages).unwrap_or_default();
    v
}

/// Database case: one completion over the snapshot. No gating applies.
pub fn run_database_case(
    site: &str,
    snapshot: &Result<DbSnapshot, String>,
    case: &TestCase,
    judge: &LlmClient,
) -> Verdict {
    let snapshot = match snapshot {
        Ok(s) => s,
        Err(e) => return Verdict::new(site, case, Judgement::No, None).with_reason(format!("unreachable: {e}")),
    };
    let schema = serde_json::to_string_pretty(snapshot).unwrap_or_default();
    let prompt = render_prompt(
        PromptId::BenchDatabase,
        &slots([
            ("databaseSchema", schema.as_str()),
            ("dataDescription", case.data_description.as_deref().unwrap_or("")),
        ]),
    )
    .expect("slots provided");
    match complete_structured(judge, vec![ChatMessage::user(prompt)], parse_db_answer) {
        Ok((yes, messages)) => {
            let raw = if yes { Judgement::Yes } else { Judgement::No };
            let mut v = Verdict::new(site, case, raw, None);
            v.judge_trajectory = Trajectory::default().with_messages(messages).unwrap_or_default();
            v
        }
        Err(e) => Verdict::new(site, case, Judgement::No, None).with_reason(format!("database judge: {e}")),
    }
}

/// Grades screenshots (data URLs) on 1-5. No screenshots means the site
/// never rendered, which scores 0, as does a grade that never parses.
pub fn grade_appearance(judge: &LlmClient, screenshots: &[String], instruction: &str) -> (u8, Vec<ChatMessage>) {
    if screenshots.is_empty() {
        return (0, Vec::new());
    }
    let prompt =
        render_prompt(PromptId::AppearanceGrading, &slots([("instruction", instruction)])).expect("slots provided");
    let ask = ChatMessage::user(prompt).with_images(screenshots.to_vec());
    match complete_structured(judge, vec![ask], parse_grade) {
        Ok((g, messages)) => (g, messages),
        Err(e) => {
            log::warn!("appearance grade unreadable: {e}");
            (0, Vec::new())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::cases::CaseKind;

    fn db_case() -> TestCase {
        TestCase {
            id: "db-1".into(),
            kind: CaseKind::Database,
            task: None,
            expected_result: None,
            data_description: Some("a table of bookings".into()),
        }
    }

    #[test]
    fn gui_answers() {
        assert_eq!(parse_gui_answer("YES. The entry shows."), Some(Judgement::Yes));
        assert_eq!(parse_gui_answer("**Partial** - only the title saved"), Some(Judgement::Partial));
        assert_eq!(parse_gui_answer("After testing, my answer is NO"), Some(Judgement::No));
        assert_eq!(parse_gui_answer("It kind of worked"), None);
    }

    #[test]
    fn judgement_lines() {
        assert_eq!(parse_final_judgement("...\nFinal Judgement: YES"), Ok(Judgement::Yes));
        assert_eq!(parse_final_judgement("**Final Judgment:** NO"), Ok(Judgement::No));
        assert!(parse_final_judgement("Final Judgement: PARTIAL").unwrap_err().contains("PARTIAL"));
        assert!(parse_final_judgement("looks fine").is_err());
        assert_eq!(parse_db_correctness("Database Interaction Correctness: YES"), Ok(true));
        assert_eq!(parse_db_correctness("**Database Interaction Correctness**: NO"), Ok(false));
        assert!(parse_db_correctness("YES").is_err());
    }

    #[test]
    fn grades() {
        assert_eq!(parse_grade("Analysis: fine.\nGrade: 4"), Ok(4));
        assert_eq!(parse_grade("Grade: [3]"), Ok(3));
        assert!(parse_grade("Grade: 7").is_err());
        let seven = LlmClient::scripted([ChatMessage::assistant("Grade: 7"), ChatMessage::assistant("Grade: 7")]);
        assert_eq!(grade_appearance(&seven, &["data:image/png;base64,AA".into()], "x").0, 0);
        let four = LlmClient::scripted([ChatMessage::assistant("Grade: 4")]);
        assert_eq!(grade_appearance(&four, &["data:image/png;base64,AA".into()], "x").0, 4);
        let unused = LlmClient::scripted([]);
        assert_eq!(grade_appearance(&unused, &[], "x").0, 0);
    }

    #[test]
    fn database_case_answers() {
        let snap: Result<DbSnapshot, String> = Ok(DbSnapshot::new());
        let yes = LlmClient::scripted([ChatMessage::assistant("Reasoning.\n```json\n{\"answer\": \"Yes\"}\n```")]);
        assert_eq!(run_database_case("s", &snap, &db_case(), &yes).gated, Judgement::Yes);
        let no = LlmClient::scripted([ChatMessage::assistant("```json\n{\"answer\": \"No\"}\n```")]);
        let v = run_database_case("s", &snap, &db_case(), &no);
        assert_eq!((v.raw, v.db_interaction_ok), (Judgement::No, None));
        let junk = LlmClient::scripted([ChatMessage::assistant("maybe"), ChatMessage::assistant("{\"answer\": 1}")]);
        assert_eq!(run_database_case("s", &snap, &db_case(), &junk).gated, Judgement::No);
        let down: Result<DbSnapshot, String> = Err("connection refused".into());
        let v = run_database_case("s", &down, &db_case(), &LlmClient::scripted([]));
        assert!(v.reason.unwrap().starts_with("unreachable"));
    }

    #[test]
    fn catalog_parsing() {
        let c = ApiCatalog::parse(examples::API_CATALOG).unwrap();
        assert_eq!(c.backend_port, Some(3001));
        assert_eq!(c.api_endpoints[0].path, "/api/posts");
        assert_eq!(c.database.kind, "PostgreSQL");
        let empty = ApiCatalog::parse(r#"{"backend_port": 8000, "api_endpoints": [], "database": {"type": "SQLite"}}"#)
            .unwrap();
        assert!(empty.api_endpoints.is_empty());
        assert!(ApiCatalog::parse(r#"{"backend_port": 8000}"#).is_err());
    }
}
