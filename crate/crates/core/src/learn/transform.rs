//! Turns a back-translation session into an ordinary coding session rooted
//! at an adjusted project path `w`, then replays it from a fresh scaffold so
//! every kept tool output matches what the tools really return.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use regex::Regex;
use serde_json::{json, Value};
use thiserror::Error;

use crate::dev::{render_backend_start, render_frontend_start, render_system_prompt, BackendSummary};
use crate::model::{
    BackendPlan, ChatMessage, DevelopmentPlan, Role, TemplateDescriptor, TemplateIds, ToolCall, Trajectory,
    TrajectoryError,
};
use crate::sandbox::{create_workspace, normalize_lexical, PortRegistry};
use crate::tools::{ToolClass, ToolConfig, ToolRegistry, ToolRuntime};

use super::backtranslate::{meta, NEW_PROJECT};

/// Recomputed tool output per tool-call ordinal in the pruned trajectory.
pub type ReplacementMap = BTreeMap<usize, String>;

/// Far enough ahead that replayed writes always sort after scaffold files.
pub const DEFAULT_CLOCK_BASE: i64 = 4_000_000_000;

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub tools: ToolConfig,
    /// Re-run shell commands so their side effects land in the replay.
    pub replay_shell: bool,
    pub clock_base: i64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { tools: ToolConfig::default(), replay_shell: true, clock_base: DEFAULT_CLOCK_BASE }
    }
}

#[derive(Debug, Clone)]
pub struct TransformInput<'a> {
    pub instruction: &'a str,
    pub plan: &'a DevelopmentPlan,
    pub frontend: &'a TemplateDescriptor,
    pub backend: &'a TemplateDescriptor,
    /// Absolute project path the cleaned trajectory refers to.
    pub adjusted_root: &'a Path,
    pub replay: ReplayOptions,
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("adjusted project path must be absolute and normalized: {0}")]
    BadRoot(PathBuf),
    #[error("replay diverged at tool call {ordinal} ({tool}): {detail}")]
    ReplayDivergence { ordinal: usize, tool: String, detail: String },
    #[error("replay environment: {0}")]
    Environment(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Replaces `from` wherever it is not glued to a longer path or word.
/// With `bare`, the preceding character must be a boundary as well.
pub fn replace_root(text: &str, from: &str, to: &str, bare: bool) -> String {
    if from.is_empty() || !text.contains(from) {
        return text.to_string();
    }
    let glue = |c: char| c.is_alphanumeric() || matches!(c, '_' | '-' | '.');
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    let mut prev: Option<char> = None;
    while let Some(at) = rest.find(from) {
        let before = rest[..at].chars().last().or(prev);
        let after = rest[at + from.len()..].chars().next();
        let ok_after = after.is_none_or(|c| !glue(c));
        let ok_before = !bare || before.is_none_or(|c| !glue(c) && c != '/');
        out.push_str(&rest[..at]);
        if ok_after && ok_before {
            out.push_str(to);
        } else {
            out.push_str(from);
        }
        prev = from.chars().last();
        rest = &rest[at + from.len()..];
    }
    out.push_str(rest);
    out
}

fn map_strings(value: &Value, f: &dyn Fn(&str) -> String) -> Value {
    match value {
        Value::String(s) => Value::String(f(s)),
        Value::Array(items) => Value::Array(items.iter().map(|v| map_strings(v, f)).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), map_strings(v, f))).collect()),
        other => other.clone(),
    }
}

/// Argument keys holding a single path, and keys holding a path list.
fn path_keys(tool: &str) -> (&'static [&'static str], Option<&'static str>) {
    match tool {
        "read_file" | "write_file" | "list_directory" | "replace" | "glob" | "search_file_content" => (&["path"], None),
        "read_many_files" => (&[], Some("paths")),
        "run_shell_command" => (&["directory"], None),
        "backend_test" | "frontend_test" => (&["directory_path"], None),
        _ => (&[], None),
    }
}

/// What the incoming trajectory knows about its original layout.
struct Frame {
    w: String,
    new_root: Option<String>,
    old_root: Option<PathBuf>,
    origin_root: Option<String>,
    origin_name: Option<Regex>,
}

impl Frame {
    fn new(t: &Trajectory, w: &Path) -> Self {
        let w = w.display().to_string();
        let text = |k: &str| t.metadata.get(k).and_then(Value::as_str).map(str::to_string);
        let new_root = text(meta::NEW_PROJECT_ROOT).filter(|r| *r != w);
        let origin_name = text(meta::ORIGIN_NAME)
            .map(|n| Regex::new(&format!(r"(^|[^\w.-]){}($|[^\w.-])", regex::escape(&n))).expect("escaped name"));
        Self {
            new_root,
            old_root: text(meta::WORKSPACE_ROOT).map(PathBuf::from),
            origin_root: text(meta::ORIGIN_REPO_ROOT),
            origin_name,
            w,
        }
    }

    /// Step 1 for free text.
    fn rewrite(&self, s: &str) -> String {
        match &self.new_root {
            Some(root) => replace_root(&replace_root(s, root, &self.w, false), NEW_PROJECT, &self.w, true),
            None => s.to_string(),
        }
    }

    fn base(&self) -> PathBuf {
        self.old_root.clone().unwrap_or_else(|| PathBuf::from(&self.w))
    }

    fn absolutize(&self, p: &str) -> String {
        let path = Path::new(p);
        if path.is_absolute() {
            normalize_lexical(path).display().to_string()
        } else {
            normalize_lexical(&self.base().join(path)).display().to_string()
        }
    }

    /// Step 1 for tool calls: rewrite, then make path arguments absolute.
    fn rewrite_call(&self, call: &mut ToolCall) {
        call.arguments = map_strings(&call.arguments, &|s| self.rewrite(s));
        if self.old_root.is_none() {
            return;
        }
        let (single, list) = path_keys(&call.name);
        let Some(args) = call.arguments.as_object_mut() else { return };
        for key in single {
            if let Some(Value::String(p)) = args.get(*key) {
                let abs = self.absolutize(p);
                args.insert(key.to_string(), Value::String(abs));
            }
        }
        if let Some(Value::Array(items)) = list.and_then(|k| args.get_mut(k)) {
            for item in items.iter_mut() {
                if let Value::String(p) = item {
                    *p = self.absolutize(p);
                }
            }
        }
    }

    fn mentions_origin(&self, s: &str) -> bool {
        self.origin_root.as_deref().is_some_and(|r| s.contains(r))
            || self.origin_name.as_ref().is_some_and(|re| re.is_match(s))
    }

    /// Step 3: drop lines that talk about the old repository.
    fn scrub(&self, s: &str) -> String {
        if !s.lines().any(|l| self.mentions_origin(l)) {
            return s.to_string();
        }
        s.lines().filter(|l| !self.mentions_origin(l)).collect::<Vec<_>>().join("\n")
    }

    fn inside(&self, p: &str) -> bool {
        Path::new(&self.absolutize(p)).starts_with(&self.w)
    }

    /// Step 4: does this call touch anything outside `w`?
    fn depends_outside(&self, call: &ToolCall) -> bool {
        let args = &call.arguments;
        let (single, list) = path_keys(&call.name);
        for key in single {
            match args.get(*key).and_then(Value::as_str) {
                Some(p) if !self.inside(p) => return true,
                Some(_) => {}
                // a missing path means the session root, which before
                // transformation is the shared workspace and not `w`
                None if call.name != "run_shell_command" && self.old_root.is_some() => return true,
                None => {}
            }
        }
        if let Some(items) = list.and_then(|k| args.get(k)).and_then(Value::as_array) {
            if items.iter().filter_map(Value::as_str).any(|p| !self.inside(p)) {
                return true;
            }
        }
        if let Some(pattern) = args.get("pattern").and_then(Value::as_str) {
            if call.name == "glob" && Path::new(pattern).is_absolute() && !pattern.starts_with(&self.w) {
                return true;
            }
        }
        if call.name == "run_shell_command" {
            let cmd = args.get("command").and_then(Value::as_str).unwrap_or("");
            if self.mentions_origin(cmd) {
                return true;
            }
        }
        false
    }

    /// Folds leftover mentions of the shared workspace root into `w`.
    fn fold_root(&self, s: &str) -> String {
        match &self.old_root {
            Some(root) => replace_root(s, &root.display().to_string(), &self.w, false),
            None => s.to_string(),
        }
    }
}

/// Endpoint inventory phrased as a backend summary, for the frontend
/// starting prompt when no real summary exists.
pub fn summary_from_plan(plan: &BackendPlan) -> BackendSummary {
    let mut text = String::from("Summary:\nFeatures Implemented:\n");
    for ep in &plan.api_endpoints {
        let what = if ep.description.trim().is_empty() { &ep.name } else { &ep.description };
        text.push_str(&format!("- {} {}: {}\n", ep.method, ep.path, what.trim()));
    }
    text.push_str("\nDemo Data in Database:\n");
    for entity in &plan.entities {
        let fields: Vec<&str> = entity.main_fields.iter().map(|f| f.name.as_str()).collect();
        text.push_str(&format!("- table name: {}; data structure: {}\n", entity.name, fields.join(", ")));
    }
    text.push_str("\nKnown Issues / Limitations: None");
    BackendSummary::parse(&text).expect("synthesized summary starts with the prefix")
}

/// Runs Steps 1-7 and returns the cleaned trajectory.
pub fn transform_trajectory(t: &Trajectory, input: &TransformInput) -> Result<Trajectory, TransformError> {
    transform_with_map(t, input).map(|(t, _)| t)
}

/// Like [`transform_trajectory`] but also returns the replacement map.
pub fn transform_with_map(
    t: &Trajectory,
    input: &TransformInput,
) -> Result<(Trajectory, ReplacementMap), TransformError> {
    let w = input.adjusted_root;
    if !w.is_absolute()
        || normalize_lexical(w) != w
        || w.as_os_str().to_string_lossy().ends_with('/') && w != Path::new("/")
    {
        return Err(TransformError::BadRoot(w.to_path_buf()));
    }
    let frame = Frame::new(t, w);
    let staged: Vec<usize> = t
        .metadata
        .get(meta::STAGED_MESSAGES)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_u64).map(|i| i as usize).collect())
        .unwrap_or_default();
    let kinds: Vec<String> = t
        .metadata
        .get(meta::STAGE_KINDS)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
        .unwrap_or_default();

    // Step 1
    let mut messages: Vec<ChatMessage> = t
        .messages()
        .iter()
        .map(|m| {
            let mut m = m.clone();
            m.content = frame.rewrite(&m.content);
            for call in &mut m.tool_calls {
                frame.rewrite_call(call);
            }
            m
        })
        .collect();

    // Step 2
    let summary = summary_from_plan(&input.plan.backend);
    for (i, m) in messages.iter_mut().enumerate() {
        if i == 0 && m.role == Role::System {
            m.content = render_system_prompt(w);
        }
        if let Some(pos) = staged.iter().position(|&s| s == i) {
            m.content = match kinds.get(pos).map(String::as_str) {
                Some("frontend") => {
                    render_frontend_start(input.instruction, input.plan, input.frontend, Some(&summary))
                }
                _ => render_backend_start(input.instruction, input.plan, input.backend),
            };
        }
    }

    // Step 3
    for (i, m) in messages.iter_mut().enumerate() {
        if m.role != Role::System && !staged.contains(&i) {
            m.content = frame.scrub(&m.content);
        }
    }

    // Step 4
    let mut dropped_ids: BTreeSet<String> = BTreeSet::new();
    let mut kept: Vec<(usize, ChatMessage)> = Vec::with_capacity(messages.len());
    for (i, m) in messages.into_iter().enumerate() {
        if m.role == Role::Tool && m.tool_call_id.as_ref().is_some_and(|id| dropped_ids.contains(id)) {
            continue;
        }
        if m.role == Role::Assistant && m.tool_calls.iter().any(|c| frame.depends_outside(c)) {
            dropped_ids.extend(m.tool_calls.iter().map(|c| c.id.clone()));
            continue;
        }
        kept.push((i, m));
    }
    for (_, m) in &mut kept {
        m.content = frame.fold_root(&m.content);
        for call in &mut m.tool_calls {
            call.arguments = map_strings(&call.arguments, &|s| frame.fold_root(s));
        }
    }
    let new_staged: Vec<usize> =
        kept.iter().enumerate().filter(|(_, (old, _))| staged.contains(old)).map(|(new, _)| new).collect();
    let mut messages: Vec<ChatMessage> = kept.into_iter().map(|(_, m)| m).collect();

    // Steps 5 and 6
    let map = replay(&messages, input)?;

    // Step 7
    let ordinal_of: BTreeMap<String, usize> =
        messages.iter().flat_map(|m| m.tool_calls.iter()).enumerate().map(|(k, c)| (c.id.clone(), k)).collect();
    for m in &mut messages {
        if let Some(k) = m.tool_call_id.as_ref().and_then(|id| ordinal_of.get(id)) {
            if let Some(content) = map.get(k) {
                m.content = content.clone();
            }
        }
    }

    let mut out = Trajectory::new(w);
    out.template_ids =
        TemplateIds { frontend: Some(input.frontend.name.clone()), backend: Some(input.backend.name.clone()) };
    out.incomplete = t.incomplete;
    out.metadata.insert(meta::NEW_PROJECT_ROOT.into(), json!(w));
    out.metadata.insert(meta::STAGED_MESSAGES.into(), json!(new_staged));
    out.metadata.insert(meta::STAGE_KINDS.into(), json!(kinds));
    let mut out = out.with_messages(messages)?;
    out.score_records = remap_scores(t, &out);
    Ok((out, map))
}

/// Score records follow their tool result to its new position; records of
/// pruned calls disappear.
fn remap_scores(before: &Trajectory, after: &Trajectory) -> Vec<crate::model::ScoreRecord> {
    let ids = |t: &Trajectory| -> Vec<String> {
        t.messages().iter().filter(|m| m.role == Role::Tool).filter_map(|m| m.tool_call_id.clone()).collect()
    };
    let old_ids = ids(before);
    let new_pos: BTreeMap<String, usize> = ids(after).into_iter().enumerate().map(|(i, id)| (id, i)).collect();
    before
        .score_records
        .iter()
        .filter_map(|r| {
            let id = old_ids.get(r.step_index)?;
            let step_index = *new_pos.get(id)?;
            Some(crate::model::ScoreRecord { step_index, ..*r })
        })
        .collect()
}

/// Arguments that name places rather than carry file contents.
const LOCATION_KEYS: &[&str] = &["path", "paths", "pattern", "directory", "directory_path", "command", "start_command"];

/// A runtime over a fresh copy of the scaffold, as Step 5 requires.
pub struct ReplayEnv {
    _scratch: tempfile::TempDir,
    pub runtime: ToolRuntime,
    root: String,
    w: String,
}

impl ReplayEnv {
    pub fn new(input: &TransformInput) -> Result<Self, TransformError> {
        let env = |e: &dyn std::fmt::Display| TransformError::Environment(e.to_string());
        let scratch = tempfile::tempdir().map_err(|e| env(&e))?;
        let ws =
            create_workspace(&[input.frontend, input.backend], &scratch.path().join("project")).map_err(|e| env(&e))?;
        let root = ws.root().display().to_string();
        let mut runtime = ToolRuntime::new(ws, input.replay.tools.clone())
            .with_logical_clock(input.replay.clock_base)
            .with_ports(PortRegistry::new());
        if let Some(db) = input.backend.db_env.clone() {
            runtime = runtime.with_env(db);
        }
        Ok(Self { _scratch: scratch, runtime, root, w: input.adjusted_root.display().to_string() })
    }

    /// Executes a `w`-frame call and returns its output in the `w` frame.
    pub fn execute(&self, call: &ToolCall) -> crate::tools::ToolResult {
        let mut local = call.clone();
        if let Some(args) = local.arguments.as_object_mut() {
            for (key, value) in args.iter_mut() {
                if LOCATION_KEYS.contains(&key.as_str()) {
                    *value = map_strings(value, &|s| replace_root(s, &self.w, &self.root, false));
                }
            }
        }
        if call.name == "run_shell_command" && local.arguments.get("directory").is_none() {
            if let Some(args) = local.arguments.as_object_mut() {
                args.insert("directory".into(), Value::String(self.root.clone()));
            }
        }
        let mut result = self.runtime.execute(&local);
        result.content = replace_root(&result.content, &self.root, &self.w, false);
        result
    }

    pub fn project_root(&self) -> &Path {
        self.runtime.workspace().root()
    }
}

fn replay(messages: &[ChatMessage], input: &TransformInput) -> Result<ReplacementMap, TransformError> {
    let env = ReplayEnv::new(input)?;
    let registry = ToolRegistry::default();
    let outputs: BTreeMap<&str, &str> = messages
        .iter()
        .filter(|m| m.role == Role::Tool)
        .filter_map(|m| m.tool_call_id.as_deref().map(|id| (id, m.content.as_str())))
        .collect();
    let mut map = ReplacementMap::new();
    for (k, call) in messages.iter().flat_map(|m| m.tool_calls.iter()).enumerate() {
        match registry.class_of(&call.name) {
            Some(ToolClass::Mutate) => {
                let result = env.execute(call);
                let original = outputs.get(call.id.as_str()).copied().unwrap_or("");
                if result.is_error && result.content != original {
                    return Err(TransformError::ReplayDivergence {
                        ordinal: k,
                        tool: call.name.clone(),
                        detail: result.content,
                    });
                }
                map.insert(k, result.content);
            }
            Some(ToolClass::Inspect) => {
                map.insert(k, env.execute(call).content);
            }
            Some(ToolClass::Execute) if call.name == "run_shell_command" && input.replay.replay_shell => {
                let result = env.execute(call);
                if result.is_error {
                    log::debug!("replayed shell call {k} reported: {}", result.content);
                }
            }
            _ => {}
        }
    }
    env.runtime.shutdown();
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replace_root_respects_boundaries() {
        assert_eq!(replace_root("/a/ws/x and /a/wsx", "/a/ws", "/w", false), "/w/x and /a/wsx");
        assert_eq!(replace_root("cd new_project/backend", NEW_PROJECT, "/w", true), "cd /w/backend");
        assert_eq!(replace_root("my_new_project", NEW_PROJECT, "/w", true), "my_new_project");
        assert_eq!(replace_root("x/new_project", NEW_PROJECT, "/w", true), "x/new_project");
        assert_eq!(replace_root("new_project.", NEW_PROJECT, "/w", true), "new_project.");
        assert_eq!(replace_root("(new_project)", NEW_PROJECT, "/w", true), "(/w)");
    }

    #[test]
    fn frame_prunes_outside_paths() {
        let mut t = Trajectory::new("/tmp/ws");
        t.metadata.insert(meta::WORKSPACE_ROOT.into(), json!("/tmp/ws"));
        t.metadata.insert(meta::NEW_PROJECT_ROOT.into(), json!("/tmp/ws/new_project"));
        t.metadata.insert(meta::ORIGIN_REPO_ROOT.into(), json!("/tmp/ws/shop"));
        t.metadata.insert(meta::ORIGIN_NAME.into(), json!("shop"));
        let frame = Frame::new(&t, Path::new("/w"));
        let call = |name: &str, args: Value| {
            let mut c = ToolCall::new("c", name, args);
            frame.rewrite_call(&mut c);
            c
        };
        assert!(frame.depends_outside(&call("read_file", json!({"path": "shop/index.js"}))));
        assert!(!frame.depends_outside(&call("read_file", json!({"path": "new_project/backend/x.js"}))));
        assert!(frame.depends_outside(&call("list_directory", json!({"path": "/tmp/ws"}))));
        assert!(frame.depends_outside(&call("glob", json!({"pattern": "**/*.js"}))));
        assert!(!frame.depends_outside(&call("run_shell_command", json!({"command": "cd new_project && ls"}))));
        assert!(frame.depends_outside(&call("run_shell_command", json!({"command": "cat shop/a.js"}))));
        assert!(frame.depends_outside(&call("read_many_files", json!({"paths": ["new_project/a", "shop/b"]}))));
        let c = call("write_file", json!({"path": "/tmp/ws/new_project/frontend/a.js", "content": "x"}));
        assert_eq!(c.arguments["path"], "/w/frontend/a.js");
        assert_eq!(frame.scrub("keep\nfrom shop/index.js\nalso keep"), "keep\nalso keep");
        assert_eq!(frame.scrub("workshop notes"), "workshop notes");
    }

    #[test]
    fn rejects_relative_adjusted_root() {
        let plan = DevelopmentPlan::default();
        let tpl = TemplateDescriptor {
            name: "t".into(),
            kind: crate::model::TemplateKind::Frontend,
            description: String::new(),
            scaffold_path: std::env::temp_dir(),
            dev_workflow: vec![],
            db_env: None,
            project_structure: String::new(),
            additional_reminders: String::new(),
        };
        let input = TransformInput {
            instruction: "x",
            plan: &plan,
            frontend: &tpl,
            backend: &tpl,
            adjusted_root: Path::new("rel/path"),
            replay: ReplayOptions::default(),
        };
        let err = transform_trajectory(&Trajectory::new("/x"), &input).unwrap_err();
        assert!(matches!(err, TransformError::BadRoot(_)));
    }
}
