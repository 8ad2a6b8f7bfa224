mod common;

use std::fs;

use common::{quick_config, read};
use turnover_cli::pipeline::{load_envelope, MassSummary};
use turnover_cli::{cmd_generate, cmd_simulate, cmd_train, CliError, ModelArtifact, RunConfig};
use turnover_core::eval::CvReport;
use turnover_core::models::{Family, Hyperparameters};
use turnover_core::policy::{builtin_programs, simulate_targeted, Policy};
use turnover_core::{Label, Schema};

#[test]
fn generate_default_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_generate(&quick_config(dir.path())).unwrap();
    assert_eq!(report.report.population.rows, 1000);
    assert_eq!(report.report.prediction_set.rows, 1000);
    assert_eq!(report.report.prediction_set.unknown, 1000);
    assert_eq!(report.report.prediction_set.year, Some(3));
    assert_eq!(read(&dir.path().join("population.csv")).lines().count(), 1001);
    let provenance = read(&dir.path().join("provenance.json"));
    assert!(provenance.contains("\"schema_version\": 1") && provenance.contains("\"seed\": 7"));
}

#[test]
fn generate_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut ca = quick_config(a.path());
    let mut cb = quick_config(b.path());
    for (cfg, dir) in [(&mut ca, a.path()), (&mut cb, b.path())] {
        cfg.data = Some(dir.join("p.csv"));
        cfg.prediction_set = Some(dir.join("q.csv"));
        cfg.schema = Some(dir.join("s.json"));
        cfg.output_dir = dir.to_path_buf();
    }
    cmd_generate(&ca).unwrap();
    cmd_generate(&cb).unwrap();
    for f in ["p.csv", "q.csv", "s.json"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn invalid_base_rate_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cfg = quick_config(&out);
    let mut g = cfg.generator_config();
    g.base_rate = 1.5;
    cfg.generator = Some(g);
    let err = cmd_generate(&cfg).unwrap_err();
    assert!(matches!(err, CliError::Generator(_)), "{err}");
    assert!(err.to_string().contains("base_rate"));
    assert!(!out.exists());
}

#[test]
fn config_rejects_unknown_fields_and_ranges() {
    assert!(matches!(RunConfig::from_json("{\"kfolds\": 3}"), Err(CliError::Config(_))));
    let cfg = RunConfig::from_json("{\"k\": 1}").unwrap();
    assert!(cfg.validate().unwrap_err().to_string().contains("k must be"));
    let cfg = RunConfig::from_json("{\"keep_fraction\": 0}").unwrap();
    assert!(cfg.validate().is_err());
    let round = RunConfig::from_json(&RunConfig::default().to_json()).unwrap();
    assert_eq!(round, RunConfig::default());
}

#[test]
fn unwritable_output_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    cmd_generate(&cfg).unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let mut bad = cfg.clone();
    bad.output_dir = blocker.join("sub");
    bad.data = Some(cfg.data_path());
    bad.schema = Some(cfg.schema_path());
    let err = cmd_train(&bad).unwrap_err();
    assert!(matches!(err, CliError::NotWritable { .. }), "{err}");
}

#[test]
fn missing_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_train(&quick_config(dir.path())).unwrap_err();
    assert!(err.to_string().contains("population.csv"), "{err}");
}

#[test]
fn single_config_grid_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    cfg.grid = Some(vec![Hyperparameters::NaiveBayes { laplace_alpha: 1.0 }]);
    cfg.resamplings = vec![turnover_core::balance::Resampling::None];
    cmd_generate(&cfg).unwrap();
    let outcome = cmd_train(&cfg).unwrap();
    assert_eq!(outcome.cv.cells.len(), 1);
    assert_eq!(outcome.artifact.model.family, Family::NaiveBayes);
    let cv: turnover_cli::pipeline::Envelope<CvReport> = load_envelope(&dir.path().join("cv_report.json")).unwrap();
    assert_eq!(cv.report.cells.len(), 1);
    assert_eq!(cv.config, cfg);
    assert_eq!(read(&dir.path().join("cv_table.txt")).lines().count(), 2);
}

#[test]
fn train_then_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    cmd_generate(&cfg).unwrap();
    let trained = cmd_train(&cfg).unwrap();
    assert_eq!(trained.cv.cells.len(), 4);
    let artifact = ModelArtifact::load(&cfg.model_path()).unwrap();
    assert_eq!(artifact, trained.artifact);
    assert!(artifact.test.auc > 0.7);
    assert_eq!(artifact.test.rows, artifact.test.confusion.true_positive
        + artifact.test.confusion.false_positive
        + artifact.test.confusion.true_negative
        + artifact.test.confusion.false_negative);

    let sim = cmd_simulate(&cfg).unwrap();
    let names: Vec<&str> = sim.mass.reports.iter().map(|r| r.policy.as_str()).collect();
    assert_eq!(names, ["P1", "P2", "P3", "P4", "P5"]);
    let table = read(&dir.path().join("mass_table.txt"));
    assert_eq!(table.lines().count(), 1 + 1 + 5 + 1);
    assert!(table.lines().nth(1).unwrap().starts_with("None"));
    let mass: turnover_cli::pipeline::Envelope<MassSummary> = load_envelope(&dir.path().join("mass_report.json")).unwrap();
    assert_eq!(mass.report, sim.mass);
    let t = sim.targeted.unwrap();
    assert!(t.residual_leaver_share <= t.baseline_leaver_share);
    assert!(dir.path().join("targeted_table.txt").exists());
}

#[test]
fn simulate_identity_and_reduced_menu() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    cmd_generate(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    let identity = dir.path().join("identity.json");
    fs::write(&identity, Policy::identity("keep").to_json()).unwrap();
    cfg.builtin_policies = false;
    cfg.policies = vec![identity];
    let sim = cmd_simulate(&cfg).unwrap();
    assert_eq!(sim.mass.reports.len(), 1);
    let r = &sim.mass.reports[0];
    assert_eq!(r.post_leaver_share.to_bits(), r.baseline_leaver_share.to_bits());

    let artifact = ModelArtifact::load(&cfg.model_path()).unwrap();
    let raw = turnover_cli::pipeline::load_csv(&cfg.prediction_path(), turnover_cli::pipeline::load_schema(&cfg.schema_path()).unwrap()).unwrap();
    let pred = artifact.prepare(&raw).unwrap();
    let (full, _) = builtin_programs(pred.schema());
    let reduced: Vec<Policy> = full.iter().filter(|p| p.name != "P4").cloned().collect();
    let rf = simulate_targeted(&artifact.model, &pred, &full).unwrap();
    let rr = simulate_targeted(&artifact.model, &pred, &reduced).unwrap();
    assert!(rf.residual_leaver_share <= rr.residual_leaver_share);
}

#[test]
fn simulate_rejects_bad_policy_and_mismatched_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(dir.path());
    cmd_generate(&cfg).unwrap();
    cmd_train(&cfg).unwrap();

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"name\": \"x\", \"rewrites\": [{\"assign\": [{\"feature\": \"performance\", \"value\": \"High\"}]}]}").unwrap();
    let mut with_bad = cfg.clone();
    with_bad.policies = vec![bad];
    let err = cmd_simulate(&with_bad).unwrap_err();
    assert!(matches!(err, CliError::Policy { .. }), "{err}");
    assert!(err.to_string().contains("rewrites[0].assign[0].feature"), "{err}");

    // same columns, different level order for a feature the model uses
    let model = ModelArtifact::load(&cfg.model_path()).unwrap();
    let used = model.model.feature_names();
    let mut schema = Schema::from_json(&read(&cfg.schema_path())).unwrap();
    let spec = schema
        .features
        .iter_mut()
        .find(|f| used.contains(&f.name) && f.kind.levels().is_some_and(|l| l.len() > 1) && !f.kind.is_ordered())
        .expect("a categorical model feature");
    if let turnover_core::FeatureKind::Categorical { levels } = &mut spec.kind {
        levels.reverse();
    }
    let moved = dir.path().join("reordered.json");
    fs::write(&moved, schema.to_json()).unwrap();
    cfg.schema = Some(moved);
    let err = cmd_simulate(&cfg).unwrap_err();
    assert!(err.is_fingerprint_mismatch(), "{err}");
}

#[test]
fn curation_drops_out_of_scope_exits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let g = cmd_generate(&cfg).unwrap();
    let trained = cmd_train(&cfg).unwrap();
    let raw = turnover_cli::pipeline::load_csv(&cfg.data_path(), turnover_cli::pipeline::load_schema(&cfg.schema_path()).unwrap()).unwrap();
    let scoped = turnover_core::curate_scope(&raw, "exit_reason").unwrap();
    assert!(scoped.labels().iter().all(|l| *l != Label::Unknown));
    let test_rows = trained.artifact.test.rows;
    assert!(test_rows < g.report.population.rows / 4 + 1);
}
