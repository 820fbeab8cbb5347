mod common;

use common::{bench_config, bench_dir, port_lock};
use webforge_core::bench::{report_from_results, run_bench, CaseKind, Judgement, Verdict};
use webforge_core::Role;

fn find<'a>(verdicts: &'a [Verdict], site: &str, case: &str) -> &'a Verdict {
    verdicts.iter().find(|v| v.site == site && v.case_id == case).unwrap()
}

#[test]
fn missing_statement_log_gates_a_passing_case() {
    let _guard = port_lock();
    let out = tempfile::tempdir().unwrap();
    let (results, report) = run_bench(&bench_dir("gating"), &bench_config("gating"), out.path()).unwrap();
    assert!(results.site_errors.is_empty(), "{:?}", results.site_errors);

    let logged = find(&results.verdicts, "guestbook-logged", "fe-sign");
    assert_eq!((logged.raw, logged.db_interaction_ok, logged.gated), (Judgement::Yes, Some(true), Judgement::Yes));
    let logs = logged.db_logs.as_deref().unwrap();
    assert!(logs.contains("INSERT INTO entries (name) VALUES"), "{logs}");
    assert!(!logs.contains("CREATE TABLE"), "startup traffic precedes the window: {logs}");

    let unlogged = find(&results.verdicts, "guestbook-unlogged", "fe-sign");
    assert_eq!(
        (unlogged.raw, unlogged.db_interaction_ok, unlogged.gated),
        (Judgement::Yes, Some(false), Judgement::No)
    );
    assert!(unlogged.reason.as_deref().unwrap().contains("statement logging is not enabled"));

    assert_eq!(report.fe_accuracy, Some(50.0));
    assert_eq!(report.fe_accuracy_ungated, Some(100.0));
    assert_eq!(report.appearance_mean, Some(3.0));
    assert_eq!(report_from_results(&out.path().join("results.json")).unwrap(), report);

    let transcript = std::fs::read_to_string(out.path().join("trajectories/guestbook-logged/fe-sign.jsonl")).unwrap();
    assert!(transcript.contains("Database Interaction Correctness: YES"));
    assert!(transcript.contains("at most interact with the website 15 times"));
}

#[test]
fn every_case_kind_on_one_site() {
    let _guard = port_lock();
    let out = tempfile::tempdir().unwrap();
    let (results, report) = run_bench(&bench_dir("full"), &bench_config("full"), out.path()).unwrap();
    assert!(results.site_errors.is_empty(), "{:?}", results.site_errors);
    let ids: Vec<&str> = results.verdicts.iter().map(|v| v.case_id.as_str()).collect();
    assert_eq!(ids, ["fe-sign", "be-create", "be-reject", "db-entries", "db-orders"]);

    let create = find(&results.verdicts, "guestbook", "be-create");
    assert_eq!((create.raw, create.gated), (Judgement::Yes, Judgement::Yes));
    assert!(create.db_logs.as_deref().unwrap().contains("INSERT INTO entries"));
    let reject = find(&results.verdicts, "guestbook", "be-reject");
    assert_eq!((reject.raw, reject.db_interaction_ok, reject.gated), (Judgement::Yes, Some(false), Judgement::No));

    for v in results.verdicts.iter().filter(|v| v.kind == CaseKind::Database) {
        assert_eq!(v.db_interaction_ok, None);
    }
    assert_eq!(report.fe_accuracy, Some(100.0));
    assert_eq!(report.be_accuracy, Some(50.0));
    assert_eq!(report.be_accuracy_ungated, Some(100.0));
    assert_eq!(report.db_accuracy, Some(50.0));
    assert_eq!(report.database.n_total, 2);

    // the PARTIAL backend verdict was sent back once
    let create_log = std::fs::read_to_string(out.path().join("trajectories/guestbook/be-create.jsonl")).unwrap();
    assert!(create_log.contains("PARTIAL is not allowed"));
    // both backend cases shared one catalog: its transcript has only one answer
    let be_msgs = &reject.judge_trajectory;
    assert!(be_msgs.messages()[0].content.contains("\"path\": \"/api/entries\""));
    let actions = results.verdicts[0].judge_trajectory.messages().iter().filter(|m| m.role == Role::Tool).count();
    assert!(actions <= 15);
}

#[test]
fn site_that_never_starts_scores_zero() {
    let _guard = port_lock();
    let sites = tempfile::tempdir().unwrap();
    let site = sites.path().join("broken");
    std::fs::create_dir_all(&site).unwrap();
    std::fs::write(
        site.join("bench-site.json"),
        r#"{"instruction": "x", "frontend": {"directory": ".", "start_command": "exit 3", "ports": [3231]},
            "database": {"type": "sqlite", "path": "data/app.db"}}"#,
    )
    .unwrap();
    std::fs::copy(bench_dir("gating").join("guestbook-logged/cases.json"), site.join("cases.json")).unwrap();
    let mut db_case = std::fs::read_to_string(site.join("cases.json")).unwrap();
    db_case = db_case.trim_end().trim_end_matches(']').to_string()
        + r#", {"id": "db-any", "kind": "database", "data_description": "anything"}]"#;
    std::fs::write(site.join("cases.json"), db_case).unwrap();

    let out = tempfile::tempdir().unwrap();
    let cfg = bench_config("gating");
    let (results, report) = run_bench(sites.path(), &cfg, out.path()).unwrap();
    let fe = find(&results.verdicts, "broken", "fe-sign");
    assert_eq!(fe.gated, Judgement::No);
    assert!(fe.reason.as_deref().unwrap().contains("failed to start"));
    let db = find(&results.verdicts, "broken", "db-any");
    assert!(db.reason.as_deref().unwrap().starts_with("unreachable"));
    assert_eq!(results.appearance["broken"], 0);
    assert_eq!(report.fe_accuracy, Some(0.0));
}
