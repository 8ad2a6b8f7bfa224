//! Retention programs expressed as feature rewrites, and counterfactual
//! simulation of their effect on a trained model's predicted leaver share.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, FeatureKind, Schema, Value};
use crate::models::{ModelError, TrainedModel};
use crate::synthgen::names;

/// A location in a policy document and what is wrong there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy {policy:?} is invalid: {}", issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid { policy: String, issues: Vec<FieldIssue> },
    #[error("policy name {0:?} appears more than once in the menu")]
    DuplicateName(String),
    #[error("malformed policy document: {0}")]
    Malformed(String),
    #[error("no row with id {0:?}")]
    UnknownId(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One test in a rewrite's match conjunction. `in` lists level or band
/// names; `min`/`max` bound numeric features inclusively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchClause {
    pub feature: String,
    #[serde(rename = "in", default, skip_serializing_if = "Option::is_none")]
    pub one_of: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl MatchClause {
    pub fn levels(feature: &str, levels: &[&str]) -> Self {
        MatchClause {
            feature: feature.into(),
            one_of: Some(levels.iter().map(|s| s.to_string()).collect()),
            min: None,
            max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssignedValue {
    Number(f64),
    Level(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub feature: String,
    pub value: AssignedValue,
}

impl Assignment {
    pub fn level(feature: &str, level: &str) -> Self {
        Assignment {
            feature: feature.into(),
            value: AssignedValue::Level(level.into()),
        }
    }
}

/// Rows satisfying every clause of `match` get every `assign` applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRewrite {
    #[serde(rename = "match", default)]
    pub clauses: Vec<MatchClause>,
    pub assign: Vec<Assignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Applied in order; a later rewrite sees the output of earlier ones.
    #[serde(default)]
    pub rewrites: Vec<FeatureRewrite>,
    /// Alternative reading: predicted leavers matching these clauses are
    /// counted as retained without any rewrite. Empty means no such reading.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hold: Vec<MatchClause>,
}

impl Policy {
    pub fn identity(name: &str) -> Self {
        Policy {
            name: name.into(),
            description: "no change".into(),
            rewrites: vec![],
            hold: vec![],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        serde_json::from_str(text).map_err(|e| PolicyError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }

    /// Checks every reference against `schema`, collecting all issues.
    pub fn validate(&self, schema: &Schema) -> Result<(), PolicyError> {
        self.compile(schema).map(|_| ())
    }

    fn compile(&self, schema: &Schema) -> Result<Compiled, PolicyError> {
        let mut issues = Vec::new();
        if self.name.trim().is_empty() {
            issues.push(FieldIssue {
                path: "name".into(),
                message: "must not be empty".into(),
            });
        }
        let mut rewrites = Vec::new();
        for (r, rw) in self.rewrites.iter().enumerate() {
            let clauses = compile_clauses(&rw.clauses, schema, &format!("rewrites[{r}].match"), &mut issues);
            if rw.assign.is_empty() {
                issues.push(FieldIssue {
                    path: format!("rewrites[{r}].assign"),
                    message: "needs at least one assignment".into(),
                });
            }
            let mut assign = Vec::new();
            for (a, asg) in rw.assign.iter().enumerate() {
                let path = format!("rewrites[{r}].assign[{a}]");
                let Some(c) = schema.feature_index(&asg.feature) else {
                    issues.push(FieldIssue {
                        path: format!("{path}.feature"),
                        message: format!("unknown feature {:?}", asg.feature),
                    });
                    continue;
                };
                let spec = &schema.features[c];
                if !spec.actionable {
                    issues.push(FieldIssue {
                        path: format!("{path}.feature"),
                        message: format!("feature {:?} is not actionable", asg.feature),
                    });
                    continue;
                }
                match (&spec.kind, &asg.value) {
                    (FeatureKind::Numeric { .. }, AssignedValue::Number(x)) if x.is_finite() => {
                        assign.push((c, Value::Number(*x)));
                    }
                    (FeatureKind::Numeric { .. }, _) => issues.push(FieldIssue {
                        path: format!("{path}.value"),
                        message: format!("feature {:?} needs a finite number", asg.feature),
                    }),
                    (_, AssignedValue::Level(l)) => match spec.level_index(l) {
                        Some(i) => assign.push((c, Value::Level(i as u32))),
                        None => issues.push(FieldIssue {
                            path: format!("{path}.value"),
                            message: format!("{l:?} is not a level of {:?}", asg.feature),
                        }),
                    },
                    (_, AssignedValue::Number(_)) => issues.push(FieldIssue {
                        path: format!("{path}.value"),
                        message: format!("feature {:?} needs a level name", asg.feature),
                    }),
                }
            }
            rewrites.push((clauses, assign));
        }
        let hold = compile_clauses(&self.hold, schema, "hold", &mut issues);
        if issues.is_empty() {
            Ok(Compiled { rewrites, hold })
        } else {
            Err(PolicyError::Invalid {
                policy: self.name.clone(),
                issues,
            })
        }
    }
}

#[derive(Debug, Clone)]
enum Test {
    Levels(Vec<bool>),
    Range(f64, f64),
}

type Clause = (usize, Test);
type CompiledRewrite = (Vec<Clause>, Vec<(usize, Value)>);

struct Compiled {
    rewrites: Vec<CompiledRewrite>,
    hold: Vec<Clause>,
}

fn compile_clauses(clauses: &[MatchClause], schema: &Schema, base: &str, issues: &mut Vec<FieldIssue>) -> Vec<Clause> {
    let mut out = Vec::new();
    for (m, cl) in clauses.iter().enumerate() {
        let path = format!("{base}[{m}]");
        let Some(c) = schema.feature_index(&cl.feature) else {
            issues.push(FieldIssue {
                path: format!("{path}.feature"),
                message: format!("unknown feature {:?}", cl.feature),
            });
            continue;
        };
        let spec = &schema.features[c];
        match (spec.kind.levels(), &cl.one_of) {
            (Some(levels), Some(wanted)) => {
                if cl.min.is_some() || cl.max.is_some() {
                    issues.push(FieldIssue {
                        path: path.clone(),
                        message: "min/max apply only to numeric features".into(),
                    });
                }
                let mut mask = vec![false; levels.len()];
                for (k, w) in wanted.iter().enumerate() {
                    match spec.level_index(w) {
                        Some(i) => mask[i] = true,
                        None => issues.push(FieldIssue {
                            path: format!("{path}.in[{k}]"),
                            message: format!("{w:?} is not a level of {:?}", cl.feature),
                        }),
                    }
                }
                out.push((c, Test::Levels(mask)));
            }
            (Some(_), None) => issues.push(FieldIssue {
                path: format!("{path}.in"),
                message: format!("feature {:?} is discrete; list levels with \"in\"", cl.feature),
            }),
            (None, Some(_)) => issues.push(FieldIssue {
                path: format!("{path}.in"),
                message: format!("feature {:?} is numeric; use min/max", cl.feature),
            }),
            (None, None) => {
                let lo = cl.min.unwrap_or(f64::NEG_INFINITY);
                let hi = cl.max.unwrap_or(f64::INFINITY);
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    issues.push(FieldIssue {
                        path,
                        message: "min must not exceed max".into(),
                    });
                } else {
                    out.push((c, Test::Range(lo, hi)));
                }
            }
        }
    }
    out
}

fn matches(clauses: &[Clause], values: &[Value]) -> bool {
    clauses.iter().all(|(c, test)| match (test, values[*c]) {
        (Test::Levels(mask), Value::Level(l)) => mask.get(l as usize).copied().unwrap_or(false),
        (Test::Range(lo, hi), Value::Number(x)) => *lo <= x && x <= *hi,
        _ => false,
    })
}

impl Compiled {
    /// Rewrites `values` in place; true if any value changed.
    fn apply(&self, values: &mut [Value]) -> bool {
        let before = values.to_vec();
        for (clauses, assign) in &self.rewrites {
            if matches(clauses, values) {
                for (c, v) in assign {
                    values[*c] = *v;
                }
            }
        }
        before.iter().zip(values.iter()).any(|(a, b)| a != b)
    }
}

/// Applies `policy` to every row, returning the rewritten dataset and the
/// number of rows whose values changed.
pub fn apply_policy_counted(ds: &Dataset, policy: &Policy) -> Result<(Dataset, usize), PolicyError> {
    let compiled = policy.compile(ds.schema())?;
    let mut touched = 0;
    let rows = ds
        .rows()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if compiled.apply(&mut r.values) {
                touched += 1;
            }
            r
        })
        .collect();
    let out = ds.with_rows(rows).expect("rewrites keep rows valid");
    Ok((out, touched))
}

pub fn apply_policy(ds: &Dataset, policy: &Policy) -> Result<Dataset, PolicyError> {
    apply_policy_counted(ds, policy).map(|(d, _)| d)
}

/// The five builtin programs, omitting (with a warning) any whose features
/// or bands the schema lacks.
///
/// - P1: remote jobs move to Location1.
/// - P2: Location3 jobs move to Location1.
/// - P3: managers with company tenure 0-2 are treated as having 3-7.
/// - P4: manager time in position is kept in band 0-2.
/// - P5: employees in their first time-in-position band are carried past it
///   (band 0-2 becomes 2-4); the hold reading counts them as retained.
pub fn builtin_programs(schema: &Schema) -> (Vec<Policy>, Vec<String>) {
    use names::*;
    let rewrite = |feature: &str, from: &[&str], to: &str| FeatureRewrite {
        clauses: vec![MatchClause::levels(feature, from)],
        assign: vec![Assignment::level(feature, to)],
    };
    let candidates = vec![
        Policy {
            name: "P1".into(),
            description: "Remote jobs reassigned to Location1".into(),
            rewrites: vec![rewrite(LOCATION, &["Remote"], "Location1")],
            hold: vec![],
        },
        Policy {
            name: "P2".into(),
            description: "Location3 jobs reassigned to Location1".into(),
            rewrites: vec![rewrite(LOCATION, &["Location3"], "Location1")],
            hold: vec![],
        },
        Policy {
            name: "P3".into(),
            description: "Managers get internal experience first (manager tenure 0-2 becomes 3-7)".into(),
            rewrites: vec![rewrite(MANAGER_TENURE_BAND, &["0-2"], "3-7")],
            hold: vec![],
        },
        Policy {
            name: "P4".into(),
            description: "Managers rotate teams (manager time in position kept at 0-2)".into(),
            rewrites: vec![rewrite(MANAGER_TIME_IN_POSITION_BAND, &["2-4", "4+"], "0-2")],
            hold: vec![],
        },
        Policy {
            name: "P5".into(),
            description: "Employees bound through their first two years in position (0-2 becomes 2-4)".into(),
            rewrites: vec![rewrite(TIME_IN_POSITION_BAND, &["0-2"], "2-4")],
            hold: vec![MatchClause::levels(TIME_IN_POSITION_BAND, &["0-2"])],
        },
    ];
    let mut programs = Vec::new();
    let mut warnings = Vec::new();
    for p in candidates {
        match p.validate(schema) {
            Ok(()) => programs.push(p),
            Err(e) => warnings.push(format!("program {} omitted: {e}", p.name)),
        }
    }
    (programs, warnings)
}

fn leaver_count(probabilities: &[f64], threshold: f64) -> usize {
    probabilities.iter().filter(|&&p| p >= threshold).count()
}

fn share(count: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        count as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyImpactReport {
    pub policy: String,
    pub description: String,
    pub rows: usize,
    pub threshold: f64,
    pub baseline_leaver_share: f64,
    pub post_leaver_share: f64,
    pub rows_touched: usize,
    /// Leaver share when predicted leavers matching the policy's hold
    /// clauses are counted as retained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_hold_leaver_share: Option<f64>,
}

/// Predicted leaver share before and after applying `policy` to every row.
pub fn simulate_mass(model: &TrainedModel, prediction_set: &Dataset, policy: &Policy) -> Result<PolicyImpactReport, PolicyError> {
    let compiled = policy.compile(prediction_set.schema())?;
    let baseline = model.predict_proba(prediction_set)?;
    let (after, rows_touched) = apply_policy_counted(prediction_set, policy)?;
    let post = model.predict_proba(&after)?;
    let n = prediction_set.len();
    let hard_hold_leaver_share = (!policy.hold.is_empty()).then(|| {
        let kept = prediction_set
            .rows()
            .iter()
            .zip(&baseline)
            .filter(|(r, &p)| p >= model.threshold && !matches(&compiled.hold, &r.values))
            .count();
        share(kept, n)
    });
    Ok(PolicyImpactReport {
        policy: policy.name.clone(),
        description: policy.description.clone(),
        rows: n,
        threshold: model.threshold,
        baseline_leaver_share: share(leaver_count(&baseline, model.threshold), n),
        post_leaver_share: share(leaver_count(&post, model.threshold), n),
        rows_touched,
        hard_hold_leaver_share,
    })
}

/// Table of mass simulations with a leading baseline row.
pub fn mass_table(reports: &[PolicyImpactReport]) -> String {
    let mut s = format!("{:<8} {:<78} {:>8} {:>10}\n", "Program", "Description", "Leavers", "Touched");
    if let Some(first) = reports.first() {
        let _ = writeln!(
            s,
            "{:<8} {:<78} {:>7.1}% {:>10}",
            "None",
            "No retention policy",
            100.0 * first.baseline_leaver_share,
            0
        );
    }
    for r in reports {
        let _ = writeln!(
            s,
            "{:<8} {:<78} {:>7.1}% {:>10}",
            r.policy,
            r.description,
            100.0 * r.post_leaver_share,
            r.rows_touched
        );
        if let Some(h) = r.hard_hold_leaver_share {
            let _ = writeln!(s, "{:<8} {:<78} {:>7.1}% {:>10}", "", "  hard-hold reading", 100.0 * h, "");
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub program: String,
    pub probability: f64,
    /// Whether the program changed any of the row's values.
    pub applies: bool,
    pub flips: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmployeeRisk {
    pub id: String,
    pub baseline_probability: f64,
    pub flagged: bool,
    pub counterfactuals: Vec<Counterfactual>,
    /// Program with the lowest probability among those that flip the
    /// prediction, ties to menu order; `None` if unflagged or none flips.
    pub assigned: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramShare {
    pub program: String,
    pub assigned: usize,
    pub population_share: f64,
    pub leaver_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetedReport {
    pub rows: usize,
    pub threshold: f64,
    pub flagged: usize,
    pub baseline_leaver_share: f64,
    pub residual_leaver_share: f64,
    /// Menu programs in order, then `None` for flagged leavers no program
    /// flips.
    pub programs: Vec<ProgramShare>,
    /// One entry per flagged leaver, in dataset order.
    pub assignments: Vec<EmployeeRisk>,
}

fn compile_menu(schema: &Schema, menu: &[Policy]) -> Result<Vec<Compiled>, PolicyError> {
    let mut seen = HashSet::new();
    for p in menu {
        if !seen.insert(p.name.as_str()) {
            return Err(PolicyError::DuplicateName(p.name.clone()));
        }
    }
    menu.iter().map(|p| p.compile(schema)).collect()
}

fn row_risk(model: &TrainedModel, cols: &[usize], values: &[Value], id: &str, menu: &[Policy], compiled: &[Compiled]) -> EmployeeRisk {
    let project = |v: &[Value]| -> Vec<Value> { cols.iter().map(|&c| v[c]).collect() };
    let baseline = model.score_rows(&[project(values)])[0];
    let flagged = baseline >= model.threshold;
    let counterfactuals: Vec<Counterfactual> = menu
        .iter()
        .zip(compiled)
        .map(|(p, c)| {
            let mut v = values.to_vec();
            let applies = c.apply(&mut v);
            let probability = if applies { model.score_rows(&[project(&v)])[0] } else { baseline };
            Counterfactual {
                program: p.name.clone(),
                probability,
                applies,
                flips: flagged && probability < model.threshold,
            }
        })
        .collect();
    let assigned = counterfactuals
        .iter()
        .filter(|c| c.flips)
        .fold(None::<&Counterfactual>, |best, c| match best {
            Some(b) if b.probability <= c.probability => Some(b),
            _ => Some(c),
        })
        .map(|c| c.program.clone());
    EmployeeRisk {
        id: id.to_string(),
        baseline_probability: baseline,
        flagged,
        counterfactuals,
        assigned,
    }
}

/// Baseline and per-program counterfactual risk for one employee.
pub fn employee_risk(model: &TrainedModel, ds: &Dataset, id: &str, menu: &[Policy]) -> Result<EmployeeRisk, PolicyError> {
    let compiled = compile_menu(ds.schema(), menu)?;
    let cols = model.check_compatible(ds)?;
    let row = ds.find(id).ok_or_else(|| PolicyError::UnknownId(id.to_string()))?;
    Ok(row_risk(model, &cols, &row.values, &row.id, menu, &compiled))
}

/// Assigns each predicted leaver at most one program from `menu`: among
/// programs that bring the row's probability below the threshold, the one
/// with the lowest probability, ties to menu order.
pub fn simulate_targeted(model: &TrainedModel, prediction_set: &Dataset, menu: &[Policy]) -> Result<TargetedReport, PolicyError> {
    let compiled = compile_menu(prediction_set.schema(), menu)?;
    let cols = model.check_compatible(prediction_set)?;
    let risks: Vec<EmployeeRisk> = prediction_set
        .rows()
        .par_iter()
        .map(|r| row_risk(model, &cols, &r.values, &r.id, menu, &compiled))
        .collect();
    let n = prediction_set.len();
    let assignments: Vec<EmployeeRisk> = risks.into_iter().filter(|r| r.flagged).collect();
    let flagged = assignments.len();
    let mut programs: Vec<ProgramShare> = menu
        .iter()
        .map(|p| p.name.clone())
        .chain(std::iter::once("None".to_string()))
        .map(|program| ProgramShare {
            program,
            assigned: 0,
            population_share: 0.0,
            leaver_share: 0.0,
        })
        .collect();
    for a in &assignments {
        let k = match &a.assigned {
            Some(name) => menu.iter().position(|p| &p.name == name).expect("assigned from menu"),
            None => menu.len(),
        };
        programs[k].assigned += 1;
    }
    for p in &mut programs {
        p.population_share = share(p.assigned, n);
        p.leaver_share = share(p.assigned, flagged);
    }
    let residual = programs.last().expect("None row").assigned;
    Ok(TargetedReport {
        rows: n,
        threshold: model.threshold,
        flagged,
        baseline_leaver_share: share(flagged, n),
        residual_leaver_share: share(residual, n),
        programs,
        assignments,
    })
}

impl TargetedReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<8} {:>12} {:>12} {:>10}\n",
            "Program", "% of total", "% of leavers", "employees"
        );
        for p in &self.programs {
            let _ = writeln!(
                s,
                "{:<8} {:>11.2}% {:>11.2}% {:>10}",
                p.program,
                100.0 * p.population_share,
                100.0 * p.leaver_share,
                p.assigned
            );
        }
        let _ = writeln!(
            s,
            "baseline leavers {:.1}%, after targeted actions {:.1}%",
            100.0 * self.baseline_leaver_share,
            100.0 * self.residual_leaver_share
        );
        s
    }

    pub fn assignment_of(&self, id: &str) -> Option<&EmployeeRisk> {
        self.assignments.iter().find(|a| a.id == id)
    }
}

#[cfg(test)]
mod tests;
