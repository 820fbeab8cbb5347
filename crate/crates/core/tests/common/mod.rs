#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use webforge_core::dev::{develop, DevConfig, DevError, DevModels, DevRun};
use webforge_core::llm::{LlmClient, ScriptedTranscript, ScriptedTransport};
use webforge_core::tools::gui::{ScriptedDriverFactory, ScriptedSite};
use webforge_core::tools::GuiSetup;
use webforge_core::TemplateRegistry;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn templates() -> TemplateRegistry {
    TemplateRegistry::load_dir(&repo_root().join("templates")).unwrap()
}

pub fn scripted(path: &Path) -> LlmClient {
    LlmClient::new(Arc::new(ScriptedTransport::new(ScriptedTranscript::load(path).unwrap())))
}

/// Config wired to the recorded transcripts in `fixtures/<unit>`.
pub fn golden_config(unit: &str) -> DevConfig {
    let dir = fixtures().join(unit);
    let models = DevModels {
        planner: scripted(&dir.join("planner.jsonl")),
        backend: scripted(&dir.join("backend_coder.jsonl")),
        frontend: scripted(&dir.join("frontend_coder.jsonl")),
    };
    let mut cfg = DevConfig::new(models, templates());
    cfg.tools.ready_timeout_secs = 20;
    cfg.tools.terminate_grace_ms = 2000;
    let site = ScriptedSite::load(&dir.join("site.json")).unwrap();
    cfg.gui = Some(GuiSetup {
        drivers: Arc::new(ScriptedDriverFactory::new(site)),
        agent: scripted(&dir.join("gui_agent.jsonl")),
    });
    cfg
}

pub fn golden_instruction(unit: &str) -> String {
    std::fs::read_to_string(fixtures().join(unit).join("instruction.txt")).unwrap().trim().to_string()
}

pub fn run_golden(unit: &str, out: &Path) -> Result<DevRun, DevError> {
    develop(&golden_instruction(unit), &golden_config(unit), out)
}

pub fn learn_dir() -> PathBuf {
    fixtures().join("learn")
}

/// Learn config replaying `fixtures/learn/transcripts`. Fixture repos use
/// disjoint ports, so two can run side by side.
pub fn learn_config() -> webforge_core::learn::LearnConfig {
    let source = webforge_core::config::ModelSource::Recorded(learn_dir().join("transcripts"));
    let mut cfg = webforge_core::learn::LearnConfig::new(source, &templates()).unwrap();
    cfg.tools.ready_timeout_secs = 20;
    cfg.tools.terminate_grace_ms = 2000;
    cfg.workers = 2;
    cfg
}

pub fn learn_repos() -> Vec<webforge_core::learn::RepoInput> {
    webforge_core::learn::RepoInput::scan(&learn_dir().join("repos")).unwrap()
}

/// Fixture sessions bind fixed ports; tests that start them take this lock.
pub fn port_lock() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: std::sync::Mutex<()> = std::sync::Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn bench_dir(set: &str) -> PathBuf {
    fixtures().join("bench").join(set)
}

/// Bench config replaying `fixtures/bench/<set>/transcripts`.
pub fn bench_config(set: &str) -> webforge_core::bench::BenchConfig {
    let source = webforge_core::config::ModelSource::Recorded(bench_dir(set).join("transcripts"));
    let mut cfg = webforge_core::bench::BenchConfig::new(source);
    cfg.tools.ready_timeout_secs = 20;
    cfg.tools.terminate_grace_ms = 2000;
    cfg.workers = 2;
    cfg
}
