//! Prompt templates with named `{{slot}}` placeholders.
//!
//! Each asset is a plain text file compiled into the binary. Rendering is a
//! single left-to-right pass: slot values are inserted verbatim and never
//! re-scanned, and a placeholder without a matching slot is an error rather
//! than literal output.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing slot {0}")]
    MissingSlot(String),
}

macro_rules! prompt_ids {
    ($($variant:ident => $file:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum PromptId { $($variant),* }

        impl PromptId {
            pub const ALL: &'static [PromptId] = &[$(PromptId::$variant),*];

            pub fn source(self) -> &'static str {
                match self { $(PromptId::$variant => include_str!(concat!("prompts/", $file))),* }
            }

            pub fn asset_name(self) -> &'static str {
                match self { $(PromptId::$variant => $file),* }
            }
        }
    };
}

prompt_ids! {
    ChooseTemplate => "choose_template.txt",
    Planning => "planning.txt",
    CodingSystem => "coding_system.txt",
    BackendStart => "backend_start.txt",
    BackendValidation => "backend_validation.txt",
    BackendSummary => "backend_summary.txt",
    FrontendStart => "frontend_start.txt",
    FrontendValidation => "frontend_validation.txt",
    GuiAgentSystem => "gui_agent_system.txt",
    GuiTestTask => "gui_test_task.txt",
    GuiErrorInterrupt => "gui_error_interrupt.txt",
    GuiPrefixNatural => "gui_prefix_natural.txt",
    GuiPrefixPremature => "gui_prefix_premature.txt",
    GuiErrorsNatural => "gui_errors_natural.txt",
    GuiErrorsPremature => "gui_errors_premature.txt",
    GuiScoreNatural => "gui_score_natural.txt",
    GuiScorePremature => "gui_score_premature.txt",
    GuiSummary => "gui_summary.txt",
    Corrective => "corrective.txt",
    InfoGathering => "info_gathering.txt",
    BacktranslateBackend => "backtranslate_backend.txt",
    BacktranslateFrontend => "backtranslate_frontend.txt",
    AugmentationPlanning => "augmentation_planning.txt",
    AugmentationImplementation => "augmentation_implementation.txt",
    AugmentationVerification => "augmentation_verification.txt",
    BenchFrontendStart => "bench_frontend_start.txt",
    BenchFrontendDbValidation => "bench_frontend_db_validation.txt",
    BenchApiInfoGathering => "bench_api_info_gathering.txt",
    BenchBackendStart => "bench_backend_start.txt",
    BenchBackendDbValidation => "bench_backend_db_validation.txt",
    BenchDatabase => "bench_database.txt",
    AppearanceGrading => "appearance_grading.txt",
}

/// Reference JSON embedded into prompts that ask for structured output.
pub mod examples {
    pub const PLAN: &str = include_str!("prompts/example_plan.json");
    pub const REPO_SUMMARY: &str = include_str!("prompts/example_repo_summary.json");
    pub const AUGMENTATION: &str = include_str!("prompts/example_augmentation.json");
    pub const API_CATALOG: &str = include_str!("prompts/example_api_catalog.json");
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}").unwrap())
}

impl PromptId {
    /// Slot names the template requires, in first-use order.
    pub fn slots(self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for cap in placeholder().captures_iter(self.source()) {
            let name = cap.get(1).unwrap().as_str();
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }
}

pub type Slots = BTreeMap<String, String>;

/// Builds a slot map from `(name, value)` pairs.
pub fn slots<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Slots {
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

pub fn render_prompt(id: PromptId, slots: &Slots) -> Result<String, PromptError> {
    let source = id.source();
    let mut out = String::with_capacity(source.len());
    let mut last = 0;
    for cap in placeholder().captures_iter(source) {
        let whole = cap.get(0).unwrap();
        let name = cap.get(1).unwrap().as_str();
        let value = slots.get(name).ok_or_else(|| PromptError::MissingSlot(name.to_string()))?;
        out.push_str(&source[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&source[last..]);
    Ok(out.trim_end().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_template_substitutes_both_slots() {
        let text = render_prompt(
            PromptId::ChooseTemplate,
            &slots([
                ("userInstruction", "Build a recipe site"),
                ("templateDescriptions", "- Next.js: React framework"),
            ]),
        )
        .unwrap();
        assert!(text.contains("Instruction: Build a recipe site"));
        assert!(text.contains("- Next.js: React framework"));
        assert!(!text.contains("{{"));
    }

    #[test]
    fn summary_prompt_is_constant() {
        assert!(PromptId::BackendSummary.slots().is_empty());
        let text = render_prompt(PromptId::BackendSummary, &Slots::new()).unwrap();
        assert!(text.starts_with("Generate a summary message that begins with the phrase \"Summary: \""));
    }

    #[test]
    fn missing_slot_is_named() {
        let err = render_prompt(PromptId::Planning, &slots([("examples", "{}"), ("colorThemeRule", "x")])).unwrap_err();
        assert_eq!(err.to_string(), "missing slot userInstruction");
    }

    #[test]
    fn slot_values_are_not_rescanned() {
        let text =
            render_prompt(PromptId::Corrective, &slots([("problem", "literal {{userInstruction}} stays")])).unwrap();
        assert!(text.contains("literal {{userInstruction}} stays"));
    }

    #[test]
    fn every_asset_renders_when_all_slots_are_given() {
        for &id in PromptId::ALL {
            let filled: Slots = id.slots().into_iter().map(|s| (s.to_string(), format!("<{s}>"))).collect();
            let text = render_prompt(id, &filled).unwrap();
            assert!(!placeholder().is_match(&text), "{} left a placeholder", id.asset_name());
        }
    }

    #[test]
    fn examples_are_valid_json() {
        for src in [examples::PLAN, examples::REPO_SUMMARY, examples::AUGMENTATION, examples::API_CATALOG] {
            serde_json::from_str::<serde_json::Value>(src).unwrap();
        }
        crate::model::DevelopmentPlan::from_value(&serde_json::from_str(examples::PLAN).unwrap()).unwrap();
    }
}
