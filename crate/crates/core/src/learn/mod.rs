//! Training data production from existing repositories: summarize, rebuild
//! the site from scratch as a coding session, clean that session, filter it
//! by its debugging scores, and drop anything close to benchmark tasks.

mod augment;
mod backtranslate;
mod decontam;
mod gather;
mod transform;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelSource;
use crate::dev::DEFAULT_TOOL_BUDGET;
use crate::model::{
    score_aggregates, ChatMessage, DevelopmentPlan, FilterConfig, ScoreKind, TemplateDescriptor, TemplateIds,
    TemplateRegistry, Trajectory,
};
use crate::sandbox::{source_digest, Workspace};
use crate::tools::{ToolConfig, ToolRuntime};

pub use augment::{
    implement_augmentation, parse_plan_set, plan_augmentations, verify_augmentation, AugmentationPlan,
    AugmentationType, Implementation, PLAN_ORDER,
};
pub use backtranslate::{backtranslate, meta, prepare_backtranslation, Colors, NEW_PROJECT};
pub use decontam::{
    cosine, decontaminate, jaccard, ngrams, Combinator, Contamination, DecontamConfig, EmbedError, Embedder,
    HashingEmbedder, HttpEmbedder, Split,
};
pub use gather::{gather_repo_info, render_info_gathering, RepoSummary};
pub use transform::{
    replace_root, summary_from_plan, transform_trajectory, transform_with_map, ReplacementMap, ReplayEnv,
    ReplayOptions, TransformError, TransformInput, DEFAULT_CLOCK_BASE,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("transform: {0}")]
    Transform(#[from] TransformError),
    #[error("decontaminate: {0}")]
    Embed(#[from] EmbedError),
}

impl LearnError {
    pub fn stage(stage: &'static str, err: impl Display) -> Self {
        LearnError::Stage { stage, message: err.to_string() }
    }
}

/// Keep repositories whose summary scores at least this.
pub const DEFAULT_QUALITY_CUTOFF: u8 = 3;
pub const DEFAULT_ADJUSTED_ROOT: &str = "/workspace/project";

/// Role names used to look up models (and recorded transcripts) per repo.
pub mod roles {
    pub const INFO_GATHERER: &str = "info_gatherer";
    pub const BACKTRANSLATOR: &str = "backtranslator";
    pub const AUGMENT_PLANNER: &str = "augment_planner";

    pub fn augmenter(k: usize) -> String {
        format!("augmenter_{k}")
    }

    pub fn verifier(k: usize) -> String {
        format!("verifier_{k}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoInput {
    pub id: String,
    pub path: PathBuf,
}

impl RepoInput {
    /// Every immediate subdirectory of `dir`, sorted by name.
    pub fn scan(dir: &Path) -> std::io::Result<Vec<RepoInput>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.file_type()?.is_dir() && !name.starts_with('.') {
                out.push(RepoInput { id: name, path: entry.path() });
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }
}

#[derive(Clone)]
pub struct LearnConfig {
    pub models: ModelSource,
    pub frontend: TemplateDescriptor,
    pub backend: TemplateDescriptor,
    pub tools: ToolConfig,
    pub filter: FilterConfig,
    pub decontam: DecontamConfig,
    pub embedder: Arc<dyn Embedder>,
    pub bench_instructions: Vec<String>,
    pub quality_cutoff: u8,
    pub tool_budget: usize,
    pub adjusted_root: PathBuf,
    pub colors: Colors,
    pub replay: ReplayOptions,
    /// Repositories processed at once.
    pub workers: usize,
}

impl LearnConfig {
    /// Picks the first frontend and first backend template in `templates`.
    pub fn new(models: ModelSource, templates: &TemplateRegistry) -> Option<Self> {
        Some(Self {
            models,
            frontend: templates.of_kind(crate::model::TemplateKind::Frontend).next()?.clone(),
            backend: templates.of_kind(crate::model::TemplateKind::Backend).next()?.clone(),
            tools: ToolConfig::default(),
            filter: FilterConfig::default(),
            decontam: DecontamConfig::default(),
            embedder: Arc::new(HashingEmbedder::default()),
            bench_instructions: Vec::new(),
            quality_cutoff: DEFAULT_QUALITY_CUTOFF,
            tool_budget: DEFAULT_TOOL_BUDGET,
            adjusted_root: PathBuf::from(DEFAULT_ADJUSTED_ROOT),
            colors: Colors::default(),
            replay: ReplayOptions::default(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get().min(4)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub origin: String,
    pub round: u8,
    pub aggregates: BTreeMap<ScoreKind, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub messages: Vec<ChatMessage>,
    pub instruction: String,
    pub plans: DevelopmentPlan,
    pub template_ids: TemplateIds,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RepoOutcome {
    Kept,
    LowQuality { quality: u8 },
    Filtered { aggregates: BTreeMap<ScoreKind, f64> },
    Contaminated { bench_index: usize, jaccard: f64, cosine: f64 },
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct RepoReport {
    pub repo: String,
    pub round: u8,
    #[serde(flatten)]
    pub outcome: RepoOutcome,
    /// Source digest of `new_project` at the end of back-translation.
    pub new_project_digest: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub records: Vec<DatasetRecord>,
    pub reports: Vec<RepoReport>,
}

/// Everything kept from one repository before decontamination.
#[derive(Debug)]
pub struct RepoProduct {
    pub record: DatasetRecord,
    pub raw: Trajectory,
    pub cleaned: Trajectory,
    pub new_project_digest: String,
}

enum Step {
    Product(Box<RepoProduct>),
    Stop(RepoOutcome, Option<String>),
}

fn origin_name(id: &str) -> String {
    let cleaned: String =
        id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect();
    if cleaned == NEW_PROJECT || cleaned.is_empty() || cleaned.chars().all(|c| c == '.') {
        format!("repo_{cleaned}")
    } else {
        cleaned
    }
}

/// gather, quality cutoff, back-translation, cleaning, score filter.
fn process_repo(repo: &RepoInput, round: u8, cfg: &LearnConfig, scratch: &Path) -> Result<Step, LearnError> {
    let unit = repo.id.as_str();
    let client = |role: &str| cfg.models.client(unit, role).map_err(|e| LearnError::stage("models", e));

    let gather_ws = Workspace::open(&repo.path).map_err(|e| LearnError::stage("gather", e))?.read_only();
    let gather_rt = ToolRuntime::new(gather_ws, cfg.tools.clone());
    let (summary, _) = gather_repo_info(&client(roles::INFO_GATHERER)?, &gather_rt, cfg.tool_budget)?;
    if summary.quality_score < cfg.quality_cutoff {
        return Ok(Step::Stop(RepoOutcome::LowQuality { quality: summary.quality_score }, None));
    }

    let name = origin_name(unit);
    let ws = prepare_backtranslation(&repo.path, &name, &cfg.frontend, &cfg.backend, &scratch.join("backtranslate"))?;
    let mut rt = ToolRuntime::new(ws.clone(), cfg.tools.clone()).with_write_roots(&[NEW_PROJECT]);
    if let Some(env) = cfg.backend.db_env.clone() {
        rt = rt.with_env(env);
    }
    if let Some(gui) = cfg.models.gui(unit).map_err(|e| LearnError::stage("models", e))? {
        rt = rt.with_gui(gui);
    }
    let mut raw = backtranslate(&client(roles::BACKTRANSLATOR)?, &rt, &summary, &name, &cfg.colors, cfg.tool_budget)?;
    rt.shutdown();
    raw.template_ids =
        TemplateIds { frontend: Some(cfg.frontend.name.clone()), backend: Some(cfg.backend.name.clone()) };
    let digest = source_digest(&ws.root().join(NEW_PROJECT)).map_err(|e| LearnError::stage("backtranslate", e))?;

    let plan = summary.plan();
    let input = TransformInput {
        instruction: &summary.user_instruction,
        plan: &plan,
        frontend: &cfg.frontend,
        backend: &cfg.backend,
        adjusted_root: &cfg.adjusted_root,
        replay: cfg.replay.clone(),
    };
    let cleaned = transform_trajectory(&raw, &input)?;

    let aggregates =
        score_aggregates(&cleaned.score_records, &cfg.filter).map_err(|e| LearnError::stage("filter", e))?;
    if !aggregates.values().all(|&v| v > 0.0) {
        return Ok(Step::Stop(RepoOutcome::Filtered { aggregates }, Some(digest)));
    }
    let record = DatasetRecord {
        messages: cleaned.messages().to_vec(),
        instruction: summary.user_instruction.clone(),
        plans: plan,
        template_ids: cleaned.template_ids.clone(),
        provenance: Provenance { origin: repo.id.clone(), round, aggregates },
    };
    let leaked = ws.root().display().to_string();
    if serde_json::to_string(&record.messages).expect("messages serialize").contains(&leaked) {
        return Err(LearnError::stage("transform", "cleaned session still mentions the back-translation workspace"));
    }
    Ok(Step::Product(Box::new(RepoProduct { record, raw, cleaned, new_project_digest: digest })))
}

/// Runs one repository through every stage up to the score filter. The
/// scratch directory receives the back-translation workspace.
pub fn produce_repo(
    repo: &RepoInput,
    round: u8,
    cfg: &LearnConfig,
    scratch: &Path,
) -> Result<Option<RepoProduct>, LearnError> {
    match process_repo(repo, round, cfg, scratch)? {
        Step::Product(p) => Ok(Some(*p)),
        Step::Stop(..) => Ok(None),
    }
}

/// One data round over `repos`. Per-repository failures are reported and
/// skipped. Records from `previous` come first in the output, unchanged.
pub fn produce_round(
    round: u8,
    repos: &[RepoInput],
    cfg: &LearnConfig,
    previous: Vec<DatasetRecord>,
) -> Result<RoundOutput, LearnError> {
    let scratch = tempfile::tempdir().map_err(|e| LearnError::stage("setup", e))?;
    let results: Mutex<Vec<Option<(Step, bool)>>> = Mutex::new((0..repos.len()).map(|_| None).collect());
    let next = Mutex::new(0usize);
    std::thread::scope(|s| {
        for _ in 0..cfg.workers.max(1).min(repos.len().max(1)) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(repo) = repos.get(i) else { break };
                let dir = scratch.path().join(format!("{i:04}"));
                let step = match process_repo(repo, round, cfg, &dir) {
                    Ok(step) => (step, false),
                    Err(e) => {
                        log::warn!("repository {} skipped: {e}", repo.id);
                        (Step::Stop(RepoOutcome::Failed { error: e.to_string() }, None), true)
                    }
                };
                results.lock().unwrap()[i] = Some(step);
            });
        }
    });

    let mut reports = Vec::new();
    let mut candidates = Vec::new();
    for (repo, slot) in repos.iter().zip(results.into_inner().unwrap()) {
        let (step, _) = slot.expect("every repository is processed");
        match step {
            Step::Product(p) => {
                reports.push(RepoReport {
                    repo: repo.id.clone(),
                    round,
                    outcome: RepoOutcome::Kept,
                    new_project_digest: Some(p.new_project_digest.clone()),
                });
                candidates.push((reports.len() - 1, p.record));
            }
            Step::Stop(outcome, digest) => {
                if let RepoOutcome::Filtered { aggregates } = &outcome {
                    log::info!("repository {} filtered out, aggregates {aggregates:?}", repo.id);
                }
                reports.push(RepoReport { repo: repo.id.clone(), round, outcome, new_project_digest: digest });
            }
        }
    }

    let (kept, dropped) = decontaminate(
        candidates,
        |(_, r)| r.instruction.as_str(),
        &cfg.bench_instructions,
        cfg.embedder.as_ref(),
        &cfg.decontam,
    )?;
    for ((at, _), c) in dropped {
        reports[at].outcome =
            RepoOutcome::Contaminated { bench_index: c.bench_index, jaccard: c.jaccard, cosine: c.cosine };
    }
    let mut records = previous;
    records.extend(kept.into_iter().map(|(_, r)| r));
    Ok(RoundOutput { records, reports })
}

/// Result of augmenting one repository.
#[derive(Debug, Clone, Serialize)]
pub struct AugmentReport {
    pub repo: String,
    pub plans: Vec<AugmentationPlan>,
    /// Per plan: the directory of the verified copy, or why it was dropped.
    pub candidates: Vec<Result<PathBuf, String>>,
}

/// Plans five augmentations and implements each on a fresh copy under
/// `dest/<id>-aug<k>`. Verified copies come back as new repositories.
pub fn augment_repo(
    repo: &RepoInput,
    cfg: &LearnConfig,
    dest: &Path,
) -> Result<(Vec<RepoInput>, AugmentReport), LearnError> {
    let unit = repo.id.as_str();
    let client = |role: &str| cfg.models.client(unit, role).map_err(|e| LearnError::stage("models", e));
    let ws = Workspace::open(&repo.path).map_err(|e| LearnError::stage("augment_plan", e))?.read_only();
    let plans = plan_augmentations(
        &client(roles::AUGMENT_PLANNER)?,
        &ToolRuntime::new(ws, cfg.tools.clone()),
        cfg.tool_budget,
    )?;
    let mut out = Vec::new();
    let mut candidates = Vec::new();
    for (k, plan) in plans.iter().enumerate() {
        let id = format!("{}-aug{}", repo.id, k + 1);
        let result = (|| -> Result<Option<PathBuf>, LearnError> {
            let copy = dest.join(&id);
            let ws = Workspace::from_mounts(&copy, &[(".".to_string(), repo.path.clone())])
                .map_err(|e| LearnError::stage("augment_implement", e))?;
            let mut rt = ToolRuntime::new(ws.clone(), cfg.tools.clone());
            if let Some(env) = cfg.backend.db_env.clone() {
                rt = rt.with_env(env);
            }
            if let Some(gui) = cfg.models.gui(unit).map_err(|e| LearnError::stage("models", e))? {
                rt = rt.with_gui(gui);
            }
            let done = implement_augmentation(&client(&roles::augmenter(k + 1))?, &rt, plan, cfg.tool_budget)?;
            rt.shutdown();
            if !done.completed {
                return Ok(None);
            }
            let ok =
                verify_augmentation(&client(&roles::verifier(k + 1))?, &rt, plan, &done.trajectory, cfg.tool_budget)?;
            Ok(ok.then(|| ws.root().to_path_buf()))
        })();
        match result {
            Ok(Some(path)) => {
                candidates.push(Ok(path.clone()));
                out.push(RepoInput { id, path });
            }
            Ok(None) => candidates.push(Err("not verified".into())),
            Err(e) => {
                log::warn!("augmentation {id} dropped: {e}");
                candidates.push(Err(e.to_string()));
            }
        }
    }
    Ok((out, AugmentReport { repo: repo.id.clone(), plans, candidates }))
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> std::io::Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)
}

/// Origin of a dropped record and why it went.
pub type Dropped = (String, RepoOutcome);

/// Re-filters an existing dataset: records whose stored aggregates are not
/// all above zero, then records overlapping the bench instructions, are
/// dropped. Dropped records come back as `(origin, outcome)`.
pub fn filter_dataset(
    records: Vec<DatasetRecord>,
    cfg: &LearnConfig,
) -> Result<(Vec<DatasetRecord>, Vec<Dropped>), LearnError> {
    let mut dropped = Vec::new();
    let mut passing = Vec::new();
    for r in records {
        let complete = ScoreKind::ALL.iter().all(|k| r.provenance.aggregates.get(k).is_some_and(|&v| v > 0.0));
        if complete {
            passing.push(r);
        } else {
            let aggregates = r.provenance.aggregates.clone();
            dropped.push((r.provenance.origin, RepoOutcome::Filtered { aggregates }));
        }
    }
    let (kept, contaminated) = decontaminate(
        passing,
        |r| r.instruction.as_str(),
        &cfg.bench_instructions,
        cfg.embedder.as_ref(),
        &cfg.decontam,
    )?;
    for (r, c) in contaminated {
        dropped.push((
            r.provenance.origin,
            RepoOutcome::Contaminated { bench_index: c.bench_index, jaccard: c.jaccard, cosine: c.cosine },
        ));
    }
    Ok((kept, dropped))
}

pub fn read_dataset(path: &Path) -> std::io::Result<Vec<DatasetRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetManifest<'a> {
    pub rounds: Vec<u8>,
    pub records: Vec<&'a Provenance>,
    pub reports: &'a [RepoReport],
}

/// `dataset.jsonl` plus a `<name>.manifest.json` sidecar.
pub fn write_round(path: &Path, rounds: &[u8], out: &RoundOutput) -> std::io::Result<PathBuf> {
    write_dataset(path, &out.records)?;
    let manifest = DatasetManifest {
        rounds: rounds.to_vec(),
        records: out.records.iter().map(|r| &r.provenance).collect(),
        reports: &out.reports,
    };
    let sidecar = path.with_extension("manifest.json");
    std::fs::write(&sidecar, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(sidecar)
}
