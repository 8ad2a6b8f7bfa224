use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::balance::WeightedDataset;
use crate::dataset::{EmployeeRecord, FeatureSpec, Label};
use crate::models::{fit, Hyperparameters};
use crate::synthgen::{default_schema, names::*};

fn default_row(schema: &Schema, id: &str, levels: &[(&str, &str)]) -> EmployeeRecord {
    let values = schema
        .features
        .iter()
        .map(|f| match levels.iter().find(|(n, _)| *n == f.name) {
            Some((_, l)) => Value::Level(f.level_index(l).unwrap() as u32),
            None if f.kind.is_numeric() => Value::Number(1.0),
            None => Value::Level(0),
        })
        .collect();
    EmployeeRecord {
        id: id.into(),
        values,
        label: Label::Unknown,
        year: 2,
        metadata: vec!["none".into()],
    }
}

fn default_ds(rows: Vec<EmployeeRecord>) -> Dataset {
    Dataset::new(Arc::new(default_schema()), rows).unwrap()
}

fn program(name: &str) -> Policy {
    builtin_programs(&default_schema())
        .0
        .into_iter()
        .find(|p| p.name == name)
        .unwrap()
}

fn level_of(ds: &Dataset, row: usize, feature: &str) -> String {
    let c = ds.schema().feature_index(feature).unwrap();
    ds.schema().features[c].format_value(&ds.rows()[row].values[c])
}

#[test]
fn builtins_are_valid() {
    let (programs, warnings) = builtin_programs(&default_schema());
    assert!(warnings.is_empty());
    let names: Vec<&str> = programs.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["P1", "P2", "P3", "P4", "P5"]);
}

#[test]
fn builtins_omitted_when_schema_lacks_features() {
    let schema = Schema::new(
        vec![FeatureSpec::categorical(LOCATION, &["Location1", "Location3", "Remote"]).actionable()],
        "status",
    )
    .unwrap();
    let (programs, warnings) = builtin_programs(&schema);
    assert_eq!(programs.len(), 2);
    assert_eq!(warnings.len(), 3);
}

#[test]
fn p1_moves_remote_only() {
    let ds = default_ds(vec![
        default_row(&default_schema(), "a", &[(LOCATION, "Remote")]),
        default_row(&default_schema(), "b", &[(LOCATION, "Location2")]),
    ]);
    let (out, touched) = apply_policy_counted(&ds, &program("P1")).unwrap();
    assert_eq!(touched, 1);
    assert_eq!(level_of(&out, 0, LOCATION), "Location1");
    assert_eq!(out.rows()[1], ds.rows()[1]);
    let c = ds.schema().feature_index(LOCATION).unwrap();
    for (k, (a, b)) in ds.rows()[0].values.iter().zip(&out.rows()[0].values).enumerate() {
        if k != c {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn p3_leaves_compliant_rows() {
    let ds = default_ds(vec![default_row(&default_schema(), "a", &[(MANAGER_TENURE_BAND, "3-7")])]);
    let (out, touched) = apply_policy_counted(&ds, &program("P3")).unwrap();
    assert_eq!((touched, &out), (0, &ds));
}

#[test]
fn p2_without_location3_is_noop() {
    let ds = default_ds(vec![
        default_row(&default_schema(), "a", &[(LOCATION, "Remote")]),
        default_row(&default_schema(), "b", &[(LOCATION, "Location1")]),
    ]);
    let (out, touched) = apply_policy_counted(&ds, &program("P2")).unwrap();
    assert_eq!(touched, 0);
    assert_eq!(out, ds);
}

#[test]
fn rewrites_apply_in_order() {
    // Remote -> Location3, then Location3 -> Location1 sees the first output
    let p = Policy {
        name: "chain".into(),
        description: String::new(),
        rewrites: vec![
            FeatureRewrite {
                clauses: vec![MatchClause::levels(LOCATION, &["Remote"])],
                assign: vec![Assignment::level(LOCATION, "Location3")],
            },
            FeatureRewrite {
                clauses: vec![MatchClause::levels(LOCATION, &["Location3"])],
                assign: vec![
                    Assignment::level(LOCATION, "Location1"),
                    Assignment::level(TIME_IN_POSITION_BAND, "4+"),
                ],
            },
        ],
        hold: vec![],
    };
    let ds = default_ds(vec![default_row(&default_schema(), "a", &[(LOCATION, "Remote")])]);
    let out = apply_policy(&ds, &p).unwrap();
    assert_eq!(level_of(&out, 0, LOCATION), "Location1");
    assert_eq!(level_of(&out, 0, TIME_IN_POSITION_BAND), "4+");
}

#[test]
fn validation_names_fields() {
    let doc = r#"{
        "name": "bad",
        "rewrites": [
            {"match": [{"feature": "location", "in": ["Mars"]}, {"feature": "age", "min": 50, "max": 40}],
             "assign": [{"feature": "performance", "value": "High"}, {"feature": "location", "value": 3}]}
        ]
    }"#;
    let p = Policy::from_json(doc).unwrap();
    let Err(PolicyError::Invalid { issues, .. }) = p.validate(&default_schema()) else {
        panic!("expected invalid");
    };
    let paths: Vec<&str> = issues.iter().map(|i| i.path.as_str()).collect();
    assert_eq!(
        paths,
        [
            "rewrites[0].match[0].in[0]",
            "rewrites[0].match[1]",
            "rewrites[0].assign[0].feature",
            "rewrites[0].assign[1].value"
        ]
    );
    assert!(issues[2].message.contains("performance") && issues[2].message.contains("not actionable"));
    assert!(matches!(Policy::from_json("{\"rewrites\": 3}"), Err(PolicyError::Malformed(_))));
    assert!(Policy::identity("id").validate(&default_schema()).is_ok());
}

#[test]
fn policy_json_round_trip() {
    let p = program("P5");
    assert_eq!(Policy::from_json(&p.to_json()).unwrap(), p);
}

/// Small labelled sample where time in position 0-2 drives leaving, plus a
/// model fitted on it.
fn toy() -> (TrainedModel, Dataset) {
    let schema = default_schema();
    let mut rows = Vec::new();
    for i in 0..60 {
        let tip = ["0-2", "2-4", "4+"][i % 3];
        let loc = ["Location1", "Location2", "Location3", "Remote"][i % 4];
        let mgr = ["0-2", "2-4", "4+"][(i / 3) % 3];
        let mut r = default_row(&schema, &format!("e{i:03}"), &[(TIME_IN_POSITION_BAND, tip), (LOCATION, loc), (MANAGER_TIME_IN_POSITION_BAND, mgr)]);
        r.label = if tip == "0-2" && i % 5 != 0 { Label::Terminated } else { Label::Active };
        r.year = 1;
        rows.push(r);
    }
    let ds = Dataset::new(Arc::new(schema), rows).unwrap();
    let features = vec![TIME_IN_POSITION_BAND.to_string(), LOCATION.to_string(), MANAGER_TIME_IN_POSITION_BAND.to_string()];
    let m = fit(
        &WeightedDataset::unweighted(ds.clone()),
        &Hyperparameters::NaiveBayes { laplace_alpha: 1.0 },
        &features,
        0,
    )
    .unwrap();
    (m, ds)
}

#[test]
fn identity_mass_is_exact() {
    let (m, ds) = toy();
    let r = simulate_mass(&m, &ds, &Policy::identity("none")).unwrap();
    assert_eq!(r.baseline_leaver_share.to_bits(), r.post_leaver_share.to_bits());
    assert_eq!(r.rows_touched, 0);
    assert!(r.hard_hold_leaver_share.is_none());
}

#[test]
fn p5_lowers_toy_share() {
    let (m, ds) = toy();
    let r = simulate_mass(&m, &ds, &program("P5")).unwrap();
    assert!(r.baseline_leaver_share > 0.0);
    assert_eq!(r.post_leaver_share, 0.0);
    assert_eq!(r.rows_touched, 20);
    assert_eq!(r.hard_hold_leaver_share, Some(0.0));
    let table = mass_table(&[r]);
    assert!(table.lines().nth(1).unwrap().starts_with("None"));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn targeted_with_empty_menu() {
    let (m, ds) = toy();
    let r = simulate_targeted(&m, &ds, &[]).unwrap();
    assert_eq!(r.residual_leaver_share, r.baseline_leaver_share);
    assert!(r.assignments.iter().all(|a| a.assigned.is_none()));
    assert_eq!(r.programs.len(), 1);
    assert_eq!(r.programs[0].assigned, r.flagged);
}

#[test]
fn targeted_single_row_flip() {
    let (m, ds) = toy();
    let flagged = m.predict_proba(&ds).unwrap().iter().position(|&p| p >= 0.5).unwrap();
    let one = ds.subset(&[flagged]);
    let r = simulate_targeted(&m, &one, &[program("P5")]).unwrap();
    assert_eq!(r.flagged, 1);
    assert_eq!(r.assignments[0].assigned.as_deref(), Some("P5"));
    assert_eq!(r.residual_leaver_share, 0.0);
    let risk = employee_risk(&m, &one, &one.rows()[0].id, &builtin_programs(one.schema()).0).unwrap();
    assert_eq!(risk.counterfactuals.len(), 5);
    assert!(matches!(employee_risk(&m, &one, "zzz", &[]), Err(PolicyError::UnknownId(_))));
}

#[test]
fn duplicate_menu_names_rejected() {
    let (m, ds) = toy();
    let menu = [program("P1"), program("P1")];
    assert_eq!(simulate_targeted(&m, &ds, &menu), Err(PolicyError::DuplicateName("P1".into())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn targeted_accounting(mask in prop::collection::vec(prop::bool::ANY, 5)) {
        let (m, ds) = toy();
        let (all, _) = builtin_programs(ds.schema());
        let menu: Vec<Policy> = all.iter().zip(&mask).filter(|(_, k)| **k).map(|(p, _)| p.clone()).collect();
        let r = simulate_targeted(&m, &ds, &menu).unwrap();
        let full = simulate_targeted(&m, &ds, &all).unwrap();
        prop_assert!(r.residual_leaver_share <= r.baseline_leaver_share);
        prop_assert!(full.residual_leaver_share <= r.residual_leaver_share);
        let assigned: usize = r.programs.iter().map(|p| p.assigned).sum();
        prop_assert_eq!(assigned, r.flagged);
        prop_assert_eq!(r.rows - r.flagged + assigned, r.rows);
        let pop: f64 = r.programs.iter().map(|p| p.population_share).sum();
        prop_assert!(pop <= 1.0 + 1e-12);
        let ids: HashSet<&str> = r.assignments.iter().map(|a| a.id.as_str()).collect();
        prop_assert_eq!(ids.len(), r.flagged);
    }

    #[test]
    fn apply_preserves_ids_and_labels(which in 0usize..5) {
        let (_, ds) = toy();
        let p = &builtin_programs(ds.schema()).0[which];
        let out = apply_policy(&ds, p).unwrap();
        prop_assert_eq!(out.len(), ds.len());
        prop_assert_eq!(out.ids(), ds.ids());
        prop_assert_eq!(out.labels(), ds.labels());
    }
}
