use std::path::PathBuf;

use clap::{Args, Subcommand};
use webforge_core::bench::{load_cases, load_manifest, report_from_results, run_bench, scan_sites, BenchReport};
use webforge_core::config::ToolkitConfig;

use crate::{failure, record_config, usage, CliResult};

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Evaluate every site directory holding a bench-site.json.
    Run {
        #[arg(long)]
        sites: PathBuf,
        /// Receives results.json, report.json and judge transcripts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute accuracies from stored verdicts.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// results.json, or the directory a run wrote it to.
    #[arg(long)]
    results: PathBuf,
}

pub fn run(cmd: &BenchCmd, cfg: &ToolkitConfig) -> CliResult {
    match cmd {
        BenchCmd::Run { sites, out } => {
            let dirs = scan_sites(sites).map_err(usage)?;
            if dirs.is_empty() {
                return Err(usage(format!("no site with a bench-site.json under {}", sites.display())));
            }
            for dir in &dirs {
                let manifest = load_manifest(dir).map_err(usage)?;
                load_cases(&dir.join(&manifest.cases)).map_err(usage)?;
            }
            let bench = cfg.bench_config().map_err(usage)?;
            record_config(cfg, &out.join("toolkit.toml"))?;
            let (results, report) = run_bench(sites, &bench, out).map_err(failure)?;
            for (site, err) in &results.site_errors {
                eprintln!("{site}: {err}");
            }
            print_report(&report);
            Ok(())
        }
        BenchCmd::Report(ReportArgs { results }) => {
            let path = if results.is_dir() { results.join("results.json") } else { results.clone() };
            let report = report_from_results(&path).map_err(usage)?;
            print_report(&report);
            Ok(())
        }
    }
}

fn print_report(report: &BenchReport) {
    println!("{}", report.table());
    println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
}
