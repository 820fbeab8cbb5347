use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dev::{run_agent_loop, AgentRole, AgentSession, LoopOutcome};
use crate::llm::{corrective, examples, extract_json, render_prompt, slots, LlmClient, PromptId, Slots};
use crate::model::{ChatMessage, Trajectory};
use crate::tools::{ToolClass, ToolRegistry, ToolRuntime};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AugmentationType {
    Simplify,
    Extend,
    ParallelApp,
}

impl AugmentationType {
    pub fn as_str(self) -> &'static str {
        match self {
            AugmentationType::Simplify => "simplify",
            AugmentationType::Extend => "extend",
            AugmentationType::ParallelApp => "parallelApp",
        }
    }
}

/// Required type of each of the five plans, in order.
pub const PLAN_ORDER: [AugmentationType; 5] = [
    AugmentationType::Simplify,
    AugmentationType::Extend,
    AugmentationType::ParallelApp,
    AugmentationType::ParallelApp,
    AugmentationType::ParallelApp,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AugmentationPlan {
    pub name: String,
    pub goal: String,
    #[serde(rename = "type")]
    pub kind: AugmentationType,
    pub key_changes: Vec<String>,
    pub estimated_effort: String,
    pub expected_benefits: String,
}

impl AugmentationPlan {
    fn slots(&self) -> Slots {
        let bullets: Vec<String> = self.key_changes.iter().map(|c| format!("- {c}")).collect();
        slots([
            ("name", self.name.clone()),
            ("goal", self.goal.clone()),
            ("type", self.kind.as_str().to_string()),
            ("keyChanges", bullets.join("\n")),
            ("expectedBenefits", self.expected_benefits.clone()),
        ])
    }
}

/// Parses and checks a plan set: five plans, mandated type order, 3-7
/// key changes each.
pub fn parse_plan_set(text: &str) -> Result<Vec<AugmentationPlan>, String> {
    let value = extract_json(text).map_err(|e| e.to_string())?;
    let raw =
        value.get("augmentationPlans").cloned().ok_or_else(|| "missing \"augmentationPlans\" array".to_string())?;
    let plans: Vec<AugmentationPlan> = serde_json::from_value(raw).map_err(|e| e.to_string())?;
    if plans.len() != PLAN_ORDER.len() {
        return Err(format!("expected exactly 5 plans, got {}", plans.len()));
    }
    for (i, (plan, want)) in plans.iter().zip(PLAN_ORDER).enumerate() {
        if plan.kind != want {
            return Err(format!(
                "plan {} must have \"type\": \"{}\", got \"{}\"",
                i + 1,
                want.as_str(),
                plan.kind.as_str()
            ));
        }
        if !(3..=7).contains(&plan.key_changes.len()) {
            return Err(format!("plan {} must list 3 to 7 keyChanges, got {}", i + 1, plan.key_changes.len()));
        }
    }
    Ok(plans)
}

fn inspect_tools() -> Vec<String> {
    ToolRegistry::default().names_of_class(ToolClass::Inspect).into_iter().map(String::from).collect()
}

/// Asks for five plans over a read-only look at the repository; one re-ask
/// on a malformed set.
pub fn plan_augmentations(
    llm: &LlmClient,
    rt: &ToolRuntime,
    budget: usize,
) -> Result<Vec<AugmentationPlan>, LearnError> {
    let root = rt.workspace().root();
    let prompt = render_prompt(
        PromptId::AugmentationPlanning,
        &slots([("repoRoot", root.display().to_string()), ("example", examples::AUGMENTATION.trim_end().to_string())]),
    )
    .expect("augmentation planning slots are complete");
    let mut t = Trajectory::new(root);
    t.push(ChatMessage::user(prompt)).unwrap();
    let mut session = AgentSession::new(AgentRole::Augmenter, t, budget, inspect_tools());
    let stage = |s: &mut AgentSession| run_agent_loop(s, llm, rt).map_err(|e| LearnError::stage("augment_plan", e));
    stage(&mut session)?;
    match parse_plan_set(session.last_assistant_text().unwrap_or("")) {
        Ok(plans) => Ok(plans),
        Err(problem) => {
            session.push_user(corrective(&problem));
            stage(&mut session)?;
            parse_plan_set(session.last_assistant_text().unwrap_or(""))
                .map_err(|p| LearnError::stage("augment_plan", p))
        }
    }
}

#[derive(Debug)]
pub struct Implementation {
    pub trajectory: Trajectory,
    /// False when the tool budget ran out; the candidate is then dropped.
    pub completed: bool,
}

/// Lets the augmenting agent edit a fresh copy of the repository.
pub fn implement_augmentation(
    llm: &LlmClient,
    rt: &ToolRuntime,
    plan: &AugmentationPlan,
    budget: usize,
) -> Result<Implementation, LearnError> {
    let root = rt.workspace().root();
    let mut s = plan.slots();
    s.insert("repoRoot".into(), root.display().to_string());
    let prompt = render_prompt(PromptId::AugmentationImplementation, &s).expect("implementation slots are complete");
    let mut t = Trajectory::new(root);
    t.push(ChatMessage::user(prompt)).unwrap();
    let role = AgentRole::Augmenter;
    let mut session = AgentSession::new(role, t, budget, role.default_tools());
    let outcome = run_agent_loop(&mut session, llm, rt).map_err(|e| LearnError::stage("augment_implement", e))?;
    Ok(Implementation { completed: outcome == LoopOutcome::Answered, trajectory: session.trajectory })
}

fn parse_verdict(text: &str) -> Result<bool, String> {
    let value = extract_json(text).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("expected a JSON object")?;
    if obj.len() != 1 {
        return Err("the object must have exactly one field, \"is_success\"".into());
    }
    obj.get("is_success").and_then(Value::as_bool).ok_or_else(|| "\"is_success\" must be true or false".into())
}

/// Continues the implementation session with the verification prompt and
/// inspect-class tools only. A verdict that stays unparseable counts as a
/// failure.
pub fn verify_augmentation(
    llm: &LlmClient,
    rt: &ToolRuntime,
    plan: &AugmentationPlan,
    history: &Trajectory,
    budget: usize,
) -> Result<bool, LearnError> {
    let prompt =
        render_prompt(PromptId::AugmentationVerification, &plan.slots()).expect("verification slots are complete");
    let mut session = AgentSession::new(AgentRole::Augmenter, history.clone(), budget, inspect_tools());
    session.push_user(prompt);
    let stage = |s: &mut AgentSession| run_agent_loop(s, llm, rt).map_err(|e| LearnError::stage("augment_verify", e));
    stage(&mut session)?;
    match parse_verdict(session.last_assistant_text().unwrap_or("")) {
        Ok(v) => Ok(v),
        Err(problem) => {
            session.push_user(corrective(&problem));
            stage(&mut session)?;
            Ok(parse_verdict(session.last_assistant_text().unwrap_or("")).unwrap_or(false))
        }
    }
}
