//! Judge-driven evaluation of generated sites: frontend, backend and
//! database test cases, database-log gating, appearance grading, and the
//! accuracy report.

mod cases;
mod db;
mod judge;
mod report;
mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use cases::{gate, load_cases, CaseKind, Judgement, TestCase, Verdict};
pub use db::{
    parse_statement_log, render_statements, snapshot_database, DbConfig, DbError, DbKind, DbLogWindow, DbSnapshot,
    LoggedStatement, TableSnapshot, SNAPSHOT_ROWS,
};
pub use judge::{
    gather_api_catalog, grade_appearance, parse_db_answer, parse_db_correctness, parse_final_judgement, parse_grade,
    parse_gui_answer, run_backend_case, run_database_case, run_frontend_case, ApiCatalog, CatalogDatabase, ServiceSpec,
    GUI_JUDGE_ACTIONS,
};
pub use report::{compute_report, BenchReport, Tally};
pub use run::{
    appearance_walk, evaluate_site, load_manifest, report_from_results, roles, run_bench, scan_sites, write_results,
    BenchConfig, BenchResults, SiteManifest, SiteOutcome, SITE_MANIFEST,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("test cases: {0}")]
    Cases(String),
    #[error("site: {0}")]
    Site(String),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}
