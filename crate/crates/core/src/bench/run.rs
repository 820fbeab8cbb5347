use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::ModelSource;
use crate::dev::DEFAULT_TOOL_BUDGET;
use crate::llm::LlmClient;
use crate::sandbox::{spawn_service, ServiceHandle, SpawnOptions, Workspace};
use crate::tools::{GuiDriver, GuiDriverFactory, ToolConfig, ToolRuntime};

use super::cases::{load_cases, CaseKind, TestCase, Verdict};
use super::db::{snapshot_database, DbConfig};
use super::judge::{
    gather_api_catalog, grade_appearance, run_backend_case, run_database_case, run_frontend_case, ServiceSpec,
    GUI_JUDGE_ACTIONS,
};
use super::report::{compute_report, BenchReport};
use super::BenchError;

pub const SITE_MANIFEST: &str = "bench-site.json";

/// Per-site unit roles for judge models.
pub mod roles {
    pub const GUI_JUDGE: &str = "gui_judge";
    pub const BACKEND_JUDGE: &str = "backend_judge";
    pub const DB_JUDGE: &str = "db_judge";
    pub const API_CATALOG: &str = "api_catalog";
    pub const APPEARANCE_JUDGE: &str = "appearance_judge";
}

/// `bench-site.json` at the root of each site directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteManifest {
    pub instruction: String,
    /// Serves the user-facing site; the landing page is its first port.
    pub frontend: ServiceSpec,
    /// Defaults to `frontend` for single-process sites.
    #[serde(default)]
    pub backend: Option<ServiceSpec>,
    /// Falls back to the bench-wide default.
    #[serde(default)]
    pub database: Option<DbConfig>,
    #[serde(default = "default_cases")]
    pub cases: PathBuf,
}

fn default_cases() -> PathBuf {
    "cases.json".into()
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub models: ModelSource,
    pub tools: ToolConfig,
    pub gui_max_actions: usize,
    pub tool_budget: usize,
    /// Landing page plus up to this many pages reached from its links.
    pub appearance_links: usize,
    pub workers: usize,
    /// Used by sites whose manifest names no database.
    pub default_db: Option<DbConfig>,
}

impl BenchConfig {
    pub fn new(models: ModelSource) -> Self {
        Self {
            models,
            tools: ToolConfig::default(),
            gui_max_actions: GUI_JUDGE_ACTIONS,
            tool_budget: DEFAULT_TOOL_BUDGET,
            appearance_links: 4,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()).min(4),
            default_db: None,
        }
    }
}

/// Everything `bench report` needs, stored as `results.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchResults {
    pub verdicts: Vec<Verdict>,
    pub appearance: BTreeMap<String, u8>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub site_errors: BTreeMap<String, String>,
}

impl BenchResults {
    pub fn report(&self) -> BenchReport {
        compute_report(&self.verdicts, &self.appearance)
    }
}

/// Site directories holding a manifest, sorted by name.
pub fn scan_sites(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| BenchError::Io(dir.to_path_buf(), e))? {
        let path = entry.map_err(|e| BenchError::Io(dir.to_path_buf(), e))?.path();
        if path.join(SITE_MANIFEST).is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_manifest(site_dir: &Path) -> Result<SiteManifest, BenchError> {
    let path = site_dir.join(SITE_MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| BenchError::Io(path.clone(), e))?;
    serde_json::from_str(&text).map_err(|e| BenchError::Site(format!("{}: {e}", path.display())))
}

fn site_name(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub struct SiteOutcome {
    pub site: String,
    pub verdicts: Vec<Verdict>,
    pub appearance: u8,
    /// Set when the site could not be evaluated at all.
    pub error: Option<String>,
}

struct Running {
    handle: ServiceHandle,
    grace: std::time::Duration,
}

impl Drop for Running {
    fn drop(&mut self) {
        self.handle.terminate_with_grace(self.grace);
    }
}

fn start(ws: &Workspace, spec: &ServiceSpec, tools: &ToolConfig) -> Result<Running, String> {
    let handle = spawn_service(ws, &spec.directory, &spec.start_command, &spec.ports, &SpawnOptions::default())
        .map_err(|e| e.to_string())?;
    let running = Running { handle, grace: tools.grace() };
    running.handle.await_ready(tools.ready_timeout()).map_err(|e| e.to_string())?;
    Ok(running)
}

/// Screenshots of the landing page and of pages its links lead to.
pub fn appearance_walk(driver: &mut dyn GuiDriver, landing: &str, max_links: usize) -> Vec<String> {
    let mut shots = Vec::new();
    let home = format!("{}/", landing.trim_end_matches('/'));
    if driver.navigate(&home).is_err() {
        return shots;
    }
    let Ok(first) = driver.observe() else { return shots };
    let mut seen = vec![first.url.clone()];
    shots.extend(first.screenshot_data_url());
    let links: Vec<String> = first
        .elements
        .iter()
        .filter(|e| e.role.eq_ignore_ascii_case("link"))
        .map(|e| e.selector.clone().unwrap_or_else(|| e.text.clone()))
        .collect();
    for target in links {
        if shots.len() > max_links {
            break;
        }
        if driver.navigate(&home).is_err() || driver.click(&target).is_err() {
            continue;
        }
        if let Ok(obs) = driver.observe() {
            if !seen.contains(&obs.url) {
                seen.push(obs.url.clone());
                shots.extend(obs.screenshot_data_url());
            }
        }
    }
    shots
}

fn judge(cfg: &BenchConfig, site: &str, role: &str) -> Result<LlmClient, String> {
    cfg.models.client(site, role).map_err(|e| format!("{role}: {e}"))
}

/// Evaluates one site in a scratch copy. Cases run one at a time so logged
/// statements belong to exactly one case.
pub fn evaluate_site(site_dir: &Path, cfg: &BenchConfig, scratch: &Path) -> SiteOutcome {
    let site = site_name(site_dir);
    let fail = |e: String| SiteOutcome { site: site.clone(), verdicts: Vec::new(), appearance: 0, error: Some(e) };
    let manifest = match load_manifest(site_dir) {
        Ok(m) => m,
        Err(e) => return fail(e.to_string()),
    };
    let cases = match load_cases(&site_dir.join(&manifest.cases)) {
        Ok(c) => c,
        Err(e) => return fail(e.to_string()),
    };
    let ws = match Workspace::from_mounts(&scratch.join(&site), &[(".".into(), site_dir.to_path_buf())]) {
        Ok(ws) => ws,
        Err(e) => return fail(e.to_string()),
    };
    let Some(db) = manifest.database.as_ref().or(cfg.default_db.as_ref()) else {
        return fail(format!("{SITE_MANIFEST} names no database and no default is configured"));
    };
    let db = db.resolved(ws.root());
    let of = |k: CaseKind| cases.iter().filter(move |c| c.kind == k);
    let mut verdicts: BTreeMap<String, Verdict> = BTreeMap::new();
    let landing = format!("http://localhost:{}", manifest.frontend.ports.first().copied().unwrap_or(80));

    // frontend cases and screenshots share one run of the site
    let mut screenshots = Vec::new();
    let drivers: Result<Arc<dyn GuiDriverFactory>, String> = match cfg.models.drivers(&site) {
        Ok(Some(d)) => Ok(d),
        Ok(None) => Err("no browser is configured".into()),
        Err(e) => Err(e.to_string()),
    };
    match start(&ws, &manifest.frontend, &cfg.tools) {
        Err(e) => {
            for c in of(CaseKind::Frontend) {
                verdicts.insert(c.id.clone(), Verdict::failed(&site, c, format!("site failed to start: {e}")));
            }
        }
        Ok(_running) => {
            let gui_judge = judge(cfg, &site, roles::GUI_JUDGE);
            for c in of(CaseKind::Frontend) {
                let v = match (&gui_judge, &drivers) {
                    (Ok(j), Ok(d)) => run_frontend_case(&site, &landing, c, j, d.as_ref(), &db, cfg.gui_max_actions),
                    (Err(e), _) | (_, Err(e)) => Verdict::failed(&site, c, e.clone()),
                };
                verdicts.insert(c.id.clone(), v);
            }
            if let Ok(d) = &drivers {
                if let Ok(mut driver) = d.open(&landing) {
                    screenshots = appearance_walk(driver.as_mut(), &landing, cfg.appearance_links);
                    driver.close();
                }
            }
        }
    }

    let backend_cases: Vec<&TestCase> = of(CaseKind::Backend).collect();
    if !backend_cases.is_empty() {
        let spec = manifest.backend.clone().unwrap_or_else(|| manifest.frontend.clone());
        let rt = ToolRuntime::new(ws.clone(), cfg.tools.clone());
        let catalog = judge(cfg, &site, roles::API_CATALOG).and_then(|j| {
            let inspect_rt = ToolRuntime::new(ws.clone().read_only(), cfg.tools.clone());
            gather_api_catalog(&j, &inspect_rt, cfg.tool_budget)
        });
        let be_judge = judge(cfg, &site, roles::BACKEND_JUDGE);
        for c in backend_cases {
            let v = match (&catalog, &be_judge) {
                (Ok((cat, _)), Ok(j)) => run_backend_case(&site, &spec, cat, c, j, &rt, &db, cfg.tool_budget),
                (Err(e), _) | (_, Err(e)) => Verdict::failed(&site, c, e.clone()),
            };
            verdicts.insert(c.id.clone(), v);
        }
        rt.shutdown();
    }

    let db_cases: Vec<&TestCase> = of(CaseKind::Database).collect();
    if !db_cases.is_empty() {
        let snapshot = snapshot_database(&db).map_err(|e| e.to_string());
        let db_judge = judge(cfg, &site, roles::DB_JUDGE);
        for c in db_cases {
            let v = match (&snapshot, &db_judge) {
                (Err(_), _) => run_database_case(&site, &snapshot, c, &LlmClient::scripted([])),
                (Ok(_), Ok(j)) => run_database_case(&site, &snapshot, c, j),
                (Ok(_), Err(e)) => Verdict::failed(&site, c, e.clone()),
            };
            verdicts.insert(c.id.clone(), v);
        }
    }

    let appearance = if screenshots.is_empty() {
        0
    } else {
        match judge(cfg, &site, roles::APPEARANCE_JUDGE) {
            Ok(j) => grade_appearance(&j, &screenshots, &manifest.instruction).0,
            Err(e) => {
                log::warn!("{site}: {e}");
                0
            }
        }
    };
    let ordered = cases.iter().filter_map(|c| verdicts.remove(&c.id)).collect();
    SiteOutcome { site, verdicts: ordered, appearance, error: None }
}

/// Evaluates every site under `sites_dir` (sites in parallel), then writes
/// `results.json`, `report.json` and per-case judge transcripts to `out`.
pub fn run_bench(sites_dir: &Path, cfg: &BenchConfig, out: &Path) -> Result<(BenchResults, BenchReport), BenchError> {
    let sites = scan_sites(sites_dir)?;
    if sites.is_empty() {
        return Err(BenchError::Site(format!("no site with {SITE_MANIFEST} under {}", sites_dir.display())));
    }
    let scratch = tempfile::tempdir().map_err(|e| BenchError::Io(std::env::temp_dir(), e))?;
    let workers = cfg.workers.max(1);
    let mut outcomes: Vec<Option<SiteOutcome>> = (0..sites.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        for (chunk_sites, chunk_out) in sites.chunks(workers).zip(outcomes.chunks_mut(workers)) {
            let handles: Vec<_> =
                chunk_sites.iter().map(|dir| s.spawn(|| evaluate_site(dir, cfg, scratch.path()))).collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = h.join().ok();
            }
        }
    });

    let mut results = BenchResults::default();
    for (dir, outcome) in sites.iter().zip(outcomes) {
        let outcome = outcome.unwrap_or_else(|| SiteOutcome {
            site: site_name(dir),
            verdicts: Vec::new(),
            appearance: 0,
            error: Some("evaluation panicked".into()),
        });
        if let Some(e) = outcome.error {
            results.site_errors.insert(outcome.site.clone(), e);
        }
        results.appearance.insert(outcome.site, outcome.appearance);
        results.verdicts.extend(outcome.verdicts);
    }
    write_results(&results, out)?;
    let report = results.report();
    Ok((results, report))
}

pub fn write_results(results: &BenchResults, out: &Path) -> Result<(), BenchError> {
    let io = |p: &Path, e| BenchError::Io(p.to_path_buf(), e);
    let traj_dir = out.join("trajectories");
    std::fs::create_dir_all(&traj_dir).map_err(|e| io(&traj_dir, e))?;
    for v in &results.verdicts {
        if v.judge_trajectory.is_empty() {
            continue;
        }
        let dir = traj_dir.join(&v.site);
        std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let path = dir.join(format!("{}.jsonl", v.case_id));
        std::fs::write(&path, v.judge_trajectory.to_jsonl()).map_err(|e| io(&path, e))?;
    }
    write_json(&out.join("results.json"), results)?;
    write_json(&out.join("report.json"), &results.report())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BenchError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    std::fs::write(path, text + "\n").map_err(|e| BenchError::Io(path.to_path_buf(), e))
}

/// Recomputes the report from stored verdicts; judges are not consulted.
pub fn report_from_results(path: &Path) -> Result<BenchReport, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(path.to_path_buf(), e))?;
    let results: BenchResults =
        serde_json::from_str(&text).map_err(|e| BenchError::Site(format!("{}: {e}", path.display())))?;
    Ok(results.report())
}
