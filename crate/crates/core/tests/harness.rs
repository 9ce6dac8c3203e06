use lce_core::harness::emit_report;
use lce_core::*;

fn small_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default_suite(seed);
    c.sigmas = vec![4.0, 8.0];
    c.n_values = vec![1, 2];
    c.explore.samples = 6;
    c
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let a = run_config(&small_config(11)).unwrap();
    let b = run_config(&small_config(11)).unwrap();
    assert_eq!(a.without_runtime(), b.without_runtime());
    assert_eq!(a.results.len(), a.summary.pass + a.summary.fail + a.summary.flagged);
}

#[test]
fn report_json_round_trips() {
    let r = run_config(&small_config(3)).unwrap();
    let back = ReportDocument::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
    for res in &back.results {
        assert_eq!(res.recomputed_status(), res.status, "{}", res.check_id);
    }
}

#[test]
fn config_round_trips_and_rejects_unknown_tolerances() {
    let c = small_config(5);
    assert_eq!(ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    let mut bad = c.clone();
    bad.tolerances.insert("no_such_key".into(), 1.0);
    assert!(bad.validate().is_err());
    let mut d3 = c;
    d3.dims = vec![3];
    assert!(d3.validate().is_err());
}

#[test]
fn emitted_files_match_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(9);
    c.output = Some(dir.path().join("r.json"));
    c.csv = Some(dir.path().join("r.csv"));
    let r = emit_report(&c).unwrap();
    let json = std::fs::read_to_string(dir.path().join("r.json")).unwrap();
    assert_eq!(ReportDocument::from_json(&json).unwrap(), r);
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), r.results.len() + 1);
}

#[test]
fn gaussian_epi_and_upper_bound_checks_pass() {
    let mut c = small_config(1);
    c.checks = vec!["epi".into(), "discrete_ub".into(), "diff_approx".into()];
    let r = run_config(&c).unwrap();
    assert!(!r.has_failures(), "{:#?}", r.results.iter().filter(|x| x.status != CheckStatus::Pass).collect::<Vec<_>>());
}
