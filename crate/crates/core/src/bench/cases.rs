use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::Trajectory;

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Frontend,
    Backend,
    Database,
}

impl CaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Frontend => "frontend",
            CaseKind::Backend => "backend",
            CaseKind::Database => "database",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub kind: CaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_result: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_description: Option<String>,
}

impl TestCase {
    pub fn validate(&self) -> Result<(), String> {
        let need = |field: &Option<String>, name: &str| match field.as_deref().map(str::trim) {
            Some(s) if !s.is_empty() => Ok(()),
            _ => Err(format!("case `{}` ({}) needs a non-empty `{name}`", self.id, self.kind.as_str())),
        };
        if self.id.trim().is_empty() {
            return Err("case with an empty id".into());
        }
        match self.kind {
            CaseKind::Frontend | CaseKind::Backend => {
                need(&self.task, "task")?;
                need(&self.expected_result, "expected_result")
            }
            CaseKind::Database => need(&self.data_description, "data_description"),
        }
    }

    pub fn task(&self) -> &str {
        self.task.as_deref().unwrap_or_default()
    }

    pub fn expected(&self) -> &str {
        self.expected_result.as_deref().unwrap_or_default()
    }
}

/// Reads a JSON array of cases. Ids must be unique and every case must carry
/// the fields its kind needs; an empty file is an error.
pub fn load_cases(path: &Path) -> Result<Vec<TestCase>, BenchError> {
    let bad = |m: String| BenchError::Cases(format!("{}: {m}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let cases: Vec<TestCase> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if cases.is_empty() {
        return Err(bad("no test cases".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in &cases {
        c.validate().map_err(bad)?;
        if !seen.insert(c.id.as_str()) {
            return Err(bad(format!("duplicate case id `{}`", c.id)));
        }
    }
    Ok(cases)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Judgement {
    Yes,
    Partial,
    No,
}

impl Judgement {
    pub fn passed(self) -> bool {
        self != Judgement::No
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub site: String,
    pub case_id: String,
    pub kind: CaseKind,
    pub raw: Judgement,
    /// None for database cases, which have no gating dimension.
    pub db_interaction_ok: Option<bool>,
    pub gated: Judgement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Statements captured while the case ran, as shown to the judge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db_logs: Option<String>,
    /// Written beside the results as JSONL rather than inline.
    #[serde(skip)]
    pub judge_trajectory: Trajectory,
}

impl Verdict {
    pub fn new(site: &str, case: &TestCase, raw: Judgement, db_interaction_ok: Option<bool>) -> Self {
        Self {
            site: site.to_string(),
            case_id: case.id.clone(),
            kind: case.kind,
            raw,
            db_interaction_ok,
            gated: gate(raw, db_interaction_ok),
            reason: None,
            db_logs: None,
            judge_trajectory: Trajectory::default(),
        }
    }

    /// A case that could not be judged at all.
    pub fn failed(site: &str, case: &TestCase, reason: impl Into<String>) -> Self {
        let db = (case.kind != CaseKind::Database).then_some(false);
        Self { reason: Some(reason.into()), ..Self::new(site, case, Judgement::No, db) }
    }

    pub fn with_reason(mut self, reason: impl Into<String>) -> Self {
        self.reason = Some(reason.into());
        self
    }
}

pub fn gate(raw: Judgement, db_interaction_ok: Option<bool>) -> Judgement {
    match db_interaction_ok {
        Some(false) => Judgement::No,
        _ => raw,
    }
}
