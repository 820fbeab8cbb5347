use std::path::{Path, PathBuf};

use clap::Subcommand;
use webforge_core::config::ToolkitConfig;
use webforge_core::learn::{
    augment_repo, filter_dataset, produce_round, read_dataset, write_dataset, write_round, AugmentReport, LearnConfig,
    RepoInput, RepoOutcome, RoundOutput,
};

use crate::{failure, record_config, usage, CliResult};

const DATASET: &str = "dataset.jsonl";

#[derive(Debug, Subcommand)]
pub enum LearnCmd {
    /// Back-translate every repository under --repos into one data round.
    Backtranslate {
        #[arg(long)]
        repos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        round: u8,
        /// dataset.jsonl from round 1; required for round 2.
        #[arg(long)]
        previous: Option<PathBuf>,
    },
    /// Plan, implement and verify augmentations of every repository.
    Augment {
        #[arg(long)]
        repos: PathBuf,
        /// Verified copies land here, one directory each.
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-apply the score filter and decontamination to a dataset.
    Filter {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Round 1, or round 1 plus augmentation and round 2, in one go.
    Dataset {
        #[arg(long)]
        repos: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        rounds: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cmd: &LearnCmd, cfg: &ToolkitConfig) -> CliResult {
    match cmd {
        LearnCmd::Backtranslate { repos, out, round, previous } => {
            let previous = match (round, previous) {
                (1, None) => Vec::new(),
                (1, Some(_)) => return Err(usage("--previous only applies to --round 2")),
                (_, None) => return Err(usage("round 2 needs the round 1 dataset: pass --previous")),
                (_, Some(p)) => read_dataset(p).map_err(|e| usage(format!("previous dataset {}: {e}", p.display())))?,
            };
            let repos = scan(repos)?;
            let learn = learn_config(cfg, out)?;
            let output = produce_round(*round, &repos, &learn, previous).map_err(failure)?;
            let rounds: Vec<u8> = (1..=*round).collect();
            finish(out, &rounds, &output)
        }
        LearnCmd::Augment { repos, out } => {
            let repos = scan(repos)?;
            let learn = learn_config(cfg, out)?;
            let (made, reports) = augment_all(&repos, &learn, out);
            write_json(&out.join("augment.json"), &reports)?;
            println!("{} verified augmentations from {} repositories", made.len(), repos.len());
            if made.is_empty() {
                return Err(failure("no augmentation was verified"));
            }
            Ok(())
        }
        LearnCmd::Filter { dataset, out } => {
            let records = read_dataset(dataset).map_err(|e| usage(format!("dataset {}: {e}", dataset.display())))?;
            let learn = learn_config(cfg, out)?;
            let total = records.len();
            let (kept, dropped) = filter_dataset(records, &learn).map_err(failure)?;
            for (origin, outcome) in &dropped {
                eprintln!("dropped {origin}: {}", describe(outcome));
            }
            write_dataset(&out.join(DATASET), &kept).map_err(|e| failure(format!("{}: {e}", out.display())))?;
            println!("{} of {total} records kept", kept.len());
            if kept.is_empty() {
                return Err(failure("every record was filtered out"));
            }
            Ok(())
        }
        LearnCmd::Dataset { repos, rounds, out } => {
            let repos = scan(repos)?;
            let learn = learn_config(cfg, out)?;
            let mut output = produce_round(1, &repos, &learn, Vec::new()).map_err(failure)?;
            if *rounds == 2 {
                let (augmented, reports) = augment_all(&repos, &learn, &out.join("augmented"));
                write_json(&out.join("augment.json"), &reports)?;
                let second = produce_round(2, &augmented, &learn, output.records).map_err(failure)?;
                let mut reports = output.reports;
                reports.extend(second.reports);
                output = RoundOutput { records: second.records, reports };
            }
            let rounds: Vec<u8> = (1..=*rounds).collect();
            finish(out, &rounds, &output)
        }
    }
}

fn scan(dir: &Path) -> Result<Vec<RepoInput>, crate::CliError> {
    let repos = RepoInput::scan(dir).map_err(|e| usage(format!("repositories {}: {e}", dir.display())))?;
    if repos.is_empty() {
        return Err(usage(format!("no repositories under {}", dir.display())));
    }
    Ok(repos)
}

fn learn_config(cfg: &ToolkitConfig, out: &Path) -> Result<LearnConfig, crate::CliError> {
    let learn = cfg.learn_config().map_err(usage)?;
    record_config(cfg, &out.join("toolkit.toml"))?;
    Ok(learn)
}

fn augment_all(repos: &[RepoInput], cfg: &LearnConfig, dest: &Path) -> (Vec<RepoInput>, Vec<AugmentReport>) {
    let mut made = Vec::new();
    let mut reports = Vec::new();
    for repo in repos {
        match augment_repo(repo, cfg, dest) {
            Ok((copies, report)) => {
                made.extend(copies);
                reports.push(report);
            }
            Err(e) => eprintln!("augmenting {} failed: {e}", repo.id),
        }
    }
    (made, reports)
}

fn finish(out: &Path, rounds: &[u8], output: &RoundOutput) -> CliResult {
    let path = out.join(DATASET);
    write_round(&path, rounds, output).map_err(|e| failure(format!("{}: {e}", path.display())))?;
    for r in &output.reports {
        if !matches!(r.outcome, RepoOutcome::Kept) {
            eprintln!("round {} {}: {}", r.round, r.repo, describe(&r.outcome));
        }
    }
    println!("{} records written to {}", output.records.len(), path.display());
    if output.records.is_empty() {
        return Err(failure("no record survived the round"));
    }
    Ok(())
}

fn describe(outcome: &RepoOutcome) -> String {
    match outcome {
        RepoOutcome::Kept => "kept".into(),
        RepoOutcome::LowQuality { quality } => format!("quality {quality} below cutoff"),
        RepoOutcome::Filtered { aggregates } => format!("score filter, aggregates {aggregates:?}"),
        RepoOutcome::Contaminated { bench_index, jaccard, cosine } => {
            format!("overlaps bench instruction {bench_index} (jaccard {jaccard:.3}, cosine {cosine:.3})")
        }
        RepoOutcome::Failed { error } => format!("failed: {error}"),
    }
}

fn write_json(path: &Path, value: &[AugmentReport]) -> CliResult {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| failure(format!("{}: {e}", parent.display())))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(failure)?;
    std::fs::write(path, text).map_err(|e| failure(format!("{}: {e}", path.display())))
}
