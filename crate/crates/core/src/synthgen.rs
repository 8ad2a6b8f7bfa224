//! Synthetic employee populations with a planted logistic turnover mechanism.
//!
//! Covariates come from per-feature marginals (with a manager pool so that
//! manager and team features are consistent within a team). Labels are drawn
//! by comparing a fixed uniform draw per row against
//! `sigmoid(intercept + sum of effects + noise_scale * z)`, where `z` is a
//! fixed standard normal draw per row. The intercept is calibrated by
//! bisection so the Terminated share lands on `base_rate`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    Dataset, EmployeeRecord, FeatureKind, FeatureSpec, Label, Schema, Value, EXIT_NONE,
    EXIT_VOLUNTARY,
};
use crate::seeding::{self, Stream};

const MAX_BISECTION_STEPS: usize = 200;
const CALIBRATION_TOLERANCE: f64 = 0.03;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("intercept calibration failed: achieved Terminated share {achieved:.4}, target {target:.4}")]
    CalibrationFailed { achieved: f64, target: f64 },
}

/// Additive log-odds contribution of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// Per-level contribution; unlisted levels contribute 0.
    Levels(BTreeMap<String, f64>),
    /// `slope * (x - center)` for numeric features.
    Linear { slope: f64, center: f64 },
}

/// Log-odds contribution applied when every listed feature takes one of
/// its listed levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub conditions: BTreeMap<String, Vec<String>>,
    pub weight: f64,
}

/// Distribution a covariate is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    /// Relative level weights; unlisted levels get weight 0.
    Levels(BTreeMap<String, f64>),
    Normal {
        mean: f64,
        sd: f64,
        min: f64,
        max: f64,
        #[serde(default)]
        decimals: Option<u32>,
    },
}

/// Synthetic manager pool: employees are assigned uniformly to managers, the
/// `manager_features` are drawn once per manager, and team features are
/// computed from the team members actually generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerPool {
    pub mean_team_size: f64,
    pub manager_features: Vec<String>,
    pub team_size_feature: Option<String>,
    pub team_high_share_feature: Option<String>,
    pub team_low_share_feature: Option<String>,
    pub performance_feature: String,
    pub high_level: String,
    pub low_level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub base_rate: f64,
    pub schema: Schema,
    pub effect_weights: BTreeMap<String, Effect>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    pub noise_scale: f64,
    pub seed: u64,
    /// Features without an entry are drawn uniformly over their levels, or
    /// from a standard normal when numeric.
    #[serde(default)]
    pub marginals: BTreeMap<String, Marginal>,
    #[serde(default)]
    pub manager_pool: Option<ManagerPool>,
    /// Fixed intercept; skips calibration when set.
    #[serde(default)]
    pub intercept: Option<f64>,
    #[serde(default = "default_years")]
    pub years: Vec<u16>,
    /// Metadata column filled with `voluntary` / `none` from the label.
    #[serde(default)]
    pub exit_reason_column: Option<String>,
}

fn default_years() -> Vec<u16> {
    vec![1, 2]
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: String| Err(GeneratorError::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return bad(format!("base_rate {} outside (0, 1)", self.base_rate));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale {} must be finite and >= 0", self.noise_scale));
        }
        if self.years.is_empty() {
            return bad("at least one cohort year is required".into());
        }
        if let Some(b) = self.intercept {
            if !b.is_finite() {
                return bad("intercept must be finite".into());
            }
        }
        self.schema
            .validate()
            .map_err(|e| GeneratorError::InvalidConfig(e.to_string()))?;
        for (name, effect) in &self.effect_weights {
            let spec = self.feature(name)?;
            match (effect, spec.kind.levels()) {
                (Effect::Levels(w), Some(levels)) => {
                    for (level, v) in w {
                        if !levels.contains(level) {
                            return bad(format!("effect on {name:?} names unknown level {level:?}"));
                        }
                        if !v.is_finite() {
                            return bad(format!("effect on {name:?}/{level:?} is not finite"));
                        }
                    }
                }
                (Effect::Linear { slope, center }, None) => {
                    if !slope.is_finite() || !center.is_finite() {
                        return bad(format!("linear effect on {name:?} is not finite"));
                    }
                }
                _ => return bad(format!("effect kind does not match feature {name:?}")),
            }
        }
        for (k, it) in self.interactions.iter().enumerate() {
            if it.conditions.is_empty() || !it.weight.is_finite() {
                return bad(format!("interaction {k} needs conditions and a finite weight"));
            }
            for (name, wanted) in &it.conditions {
                let Some(levels) = self.feature(name)?.kind.levels() else {
                    return bad(format!("interaction {k} conditions on numeric feature {name:?}"));
                };
                if let Some(l) = wanted.iter().find(|l| !levels.contains(l)) {
                    return bad(format!("interaction {k} names unknown level {l:?} of {name:?}"));
                }
            }
        }
        for (name, m) in &self.marginals {
            let spec = self.feature(name)?;
            match (m, spec.kind.levels()) {
                (Marginal::Levels(w), Some(levels)) => {
                    if w.keys().any(|l| !levels.contains(l)) {
                        return bad(format!("marginal for {name:?} names an unknown level"));
                    }
                    if w.values().any(|v| !(v.is_finite() && *v >= 0.0))
                        || w.values().sum::<f64>() <= 0.0
                    {
                        return bad(format!("marginal weights for {name:?} must be >= 0, not all 0"));
                    }
                }
                (Marginal::Normal { mean, sd, min, max, .. }, None) => {
                    if !(mean.is_finite() && *sd >= 0.0 && sd.is_finite() && min <= max) {
                        return bad(format!("normal marginal for {name:?} is malformed"));
                    }
                }
                _ => return bad(format!("marginal kind does not match feature {name:?}")),
            }
        }
        if let Some(pool) = &self.manager_pool {
            if !(pool.mean_team_size >= 1.0 && pool.mean_team_size.is_finite()) {
                return bad("mean_team_size must be >= 1".into());
            }
            for f in &pool.manager_features {
                self.feature(f)?;
            }
            for f in [
                &pool.team_size_feature,
                &pool.team_high_share_feature,
                &pool.team_low_share_feature,
            ]
            .into_iter()
            .flatten()
            {
                if !self.feature(f)?.kind.is_numeric() {
                    return bad(format!("team feature {f:?} must be numeric"));
                }
            }
            let perf = self.feature(&pool.performance_feature)?;
            if perf.level_index(&pool.high_level).is_none()
                || perf.level_index(&pool.low_level).is_none()
            {
                return bad("manager pool performance levels not declared".into());
            }
        }
        if let Some(col) = &self.exit_reason_column {
            if !self.schema.metadata_columns.contains(col) {
                return bad(format!("exit reason column {col:?} is not a schema metadata column"));
            }
        }
        Ok(())
    }

    fn feature(&self, name: &str) -> Result<&FeatureSpec, GeneratorError> {
        self.schema
            .feature(name)
            .ok_or_else(|| GeneratorError::InvalidConfig(format!("unknown feature {name:?}")))
    }

    /// Planted log-odds contribution of a level, 0 when not planted.
    pub fn level_weight(&self, feature: &str, level: &str) -> f64 {
        match self.effect_weights.get(feature) {
            Some(Effect::Levels(w)) => w.get(level).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }
}

/// Intermediate state: covariates plus the fixed per-row random draws.
struct Population {
    rows: Vec<Vec<Value>>,
    years: Vec<u16>,
    uniforms: Vec<f64>,
    normals: Vec<f64>,
}

pub fn generate_population(cfg: &GeneratorConfig) -> Result<Dataset, GeneratorError> {
    cfg.validate()?;
    let pop = draw_population(cfg);
    let scores = linear_scores(cfg, &pop);
    let intercept = match cfg.intercept {
        Some(b) => b,
        None => calibrate_intercept(cfg.base_rate, &scores, &pop.uniforms)?,
    };
    let schema = Arc::new(cfg.schema.clone());
    let exit_col = cfg
        .exit_reason_column
        .as_ref()
        .and_then(|c| schema.metadata_columns.iter().position(|m| m == c));
    let width = (cfg.n as f64).log10().floor() as usize + 1;
    let records = pop
        .rows
        .into_iter()
        .enumerate()
        .map(|(i, values)| {
            let terminated = pop.uniforms[i] < sigmoid(intercept + scores[i]);
            let label = if terminated {
                Label::Terminated
            } else {
                Label::Active
            };
            let mut metadata = vec![String::new(); schema.metadata_columns.len()];
            if let Some(c) = exit_col {
                metadata[c] = if terminated { EXIT_VOLUNTARY } else { EXIT_NONE }.to_string();
            }
            EmployeeRecord {
                id: format!("e{:0width$}", i + 1, width = width),
                values,
                label,
                year: pop.years[i],
                metadata,
            }
        })
        .collect();
    Dataset::new(schema, records).map_err(|e| GeneratorError::InvalidConfig(e.to_string()))
}

/// Relabels a generated population as a prediction set: every label becomes
/// Unknown, the cohort year is replaced and ids get a `p` prefix.
pub fn as_prediction_set(ds: &Dataset, year: u16) -> Dataset {
    let rows = ds
        .rows()
        .iter()
        .map(|r| EmployeeRecord {
            id: format!("p{}", r.id),
            label: Label::Unknown,
            year,
            metadata: r.metadata.iter().map(|m| if m.is_empty() { m.clone() } else { EXIT_NONE.to_string() }).collect(),
            ..r.clone()
        })
        .collect();
    ds.with_rows(rows).expect("relabelled rows stay valid")
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn draw_from(m: Option<&Marginal>, spec: &FeatureSpec, rng: &mut impl Rng) -> Value {
    match (&spec.kind, m) {
        (kind, Some(Marginal::Levels(w))) => {
            let levels = kind.levels().expect("validated");
            let weights: Vec<f64> = levels.iter().map(|l| w.get(l).copied().unwrap_or(0.0)).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    return Value::Level(i as u32);
                }
                u -= w;
            }
            let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
            Value::Level(last as u32)
        }
        (_, Some(Marginal::Normal { mean, sd, min, max, decimals })) => {
            let z: f64 = StandardNormal.sample(rng);
            let mut x = (mean + sd * z).clamp(*min, *max);
            if let Some(d) = decimals {
                let scale = 10f64.powi(*d as i32);
                x = (x * scale).round() / scale;
            }
            Value::Number(x)
        }
        (FeatureKind::Numeric { .. }, None) => Value::Number(StandardNormal.sample(rng)),
        (kind, None) => {
            let n = kind.levels().expect("discrete").len();
            Value::Level(rng.random_range(0..n) as u32)
        }
    }
}

fn draw_population(cfg: &GeneratorConfig) -> Population {
    let schema = &cfg.schema;
    let mut rng = seeding::rng(cfg.seed, Stream::Covariates);
    let pool = cfg.manager_pool.as_ref();
    let pool_index = |name: &str| schema.feature_index(name).expect("validated");

    let manager_cols: Vec<usize> = pool
        .map(|p| p.manager_features.iter().map(|f| pool_index(f)).collect())
        .unwrap_or_default();
    let team_cols: Vec<usize> = pool
        .map(|p| {
            [
                &p.team_size_feature,
                &p.team_high_share_feature,
                &p.team_low_share_feature,
            ]
            .into_iter()
            .flatten()
            .map(|f| pool_index(f))
            .collect()
        })
        .unwrap_or_default();

    let n_managers = pool
        .map(|p| ((cfg.n as f64 / p.mean_team_size).round() as usize).max(1))
        .unwrap_or(0);
    let managers: Vec<Vec<Value>> = (0..n_managers)
        .map(|_| {
            manager_cols
                .iter()
                .map(|&c| draw_from(cfg.marginals.get(&schema.features[c].name), &schema.features[c], &mut rng))
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.n);
    let mut years = Vec::with_capacity(cfg.n);
    let mut assignment = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let manager = if n_managers > 0 {
            rng.random_range(0..n_managers)
        } else {
            0
        };
        let mut values = Vec::with_capacity(schema.features.len());
        for (c, spec) in schema.features.iter().enumerate() {
            let v = if let Some(k) = manager_cols.iter().position(|&m| m == c) {
                managers[manager][k]
            } else if team_cols.contains(&c) {
                Value::Number(0.0)
            } else {
                draw_from(cfg.marginals.get(&spec.name), spec, &mut rng)
            };
            values.push(v);
        }
        years.push(cfg.years[rng.random_range(0..cfg.years.len())]);
        assignment.push(manager);
        rows.push(values);
    }

    if let Some(p) = pool {
        let perf = pool_index(&p.performance_feature);
        let perf_spec = &schema.features[perf];
        let high = perf_spec.level_index(&p.high_level).expect("validated") as u32;
        let low = perf_spec.level_index(&p.low_level).expect("validated") as u32;
        let mut size = vec![0usize; n_managers];
        let mut highs = vec![0usize; n_managers];
        let mut lows = vec![0usize; n_managers];
        for (row, &m) in rows.iter().zip(&assignment) {
            size[m] += 1;
            match row[perf] {
                Value::Level(l) if l == high => highs[m] += 1,
                Value::Level(l) if l == low => lows[m] += 1,
                _ => {}
            }
        }
        for (row, &m) in rows.iter_mut().zip(&assignment) {
            if let Some(f) = &p.team_size_feature {
                row[pool_index(f)] = Value::Number(size[m] as f64);
            }
            if let Some(f) = &p.team_high_share_feature {
                row[pool_index(f)] = Value::Number(round2(highs[m] as f64 / size[m] as f64));
            }
            if let Some(f) = &p.team_low_share_feature {
                row[pool_index(f)] = Value::Number(round2(lows[m] as f64 / size[m] as f64));
            }
        }
    }

    let mut draws = seeding::rng(cfg.seed, Stream::LabelDraws);
    let mut uniforms = Vec::with_capacity(cfg.n);
    let mut normals = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        uniforms.push(draws.random::<f64>());
        normals.push(StandardNormal.sample(&mut draws));
    }
    Population {
        rows,
        years,
        uniforms,
        normals,
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Per-row logit excluding the intercept.
fn linear_scores(cfg: &GeneratorConfig, pop: &Population) -> Vec<f64> {
    let effects: Vec<(usize, &Effect)> = cfg
        .effect_weights
        .iter()
        .map(|(name, e)| (cfg.schema.feature_index(name).expect("validated"), e))
        .collect();
    type Joint = (Vec<(usize, Vec<u32>)>, f64);
    let interactions: Vec<Joint> = cfg
        .interactions
        .iter()
        .map(|it| {
            let conds = it
                .conditions
                .iter()
                .map(|(name, wanted)| {
                    let spec = cfg.schema.feature(name).expect("validated");
                    let idx = wanted.iter().map(|l| spec.level_index(l).expect("validated") as u32).collect();
                    (cfg.schema.feature_index(name).expect("validated"), idx)
                })
                .collect();
            (conds, it.weight)
        })
        .collect();
    pop.rows
        .iter()
        .zip(&pop.normals)
        .map(|(row, z)| {
            let joint: f64 = interactions
                .iter()
                .filter(|(conds, _)| {
                    conds
                        .iter()
                        .all(|(c, idx)| matches!(row[*c], Value::Level(l) if idx.contains(&l)))
                })
                .map(|(_, w)| w)
                .sum();
            let planted: f64 = effects
                .iter()
                .map(|(c, effect)| match (effect, row[*c]) {
                    (Effect::Levels(w), Value::Level(l)) => {
                        let levels = cfg.schema.features[*c].kind.levels().expect("discrete");
                        w.get(&levels[l as usize]).copied().unwrap_or(0.0)
                    }
                    (Effect::Linear { slope, center }, Value::Number(x)) => slope * (x - center),
                    _ => 0.0,
                })
                .sum();
            planted + joint + cfg.noise_scale * z
        })
        .collect()
}

fn positive_share(intercept: f64, scores: &[f64], uniforms: &[f64]) -> f64 {
    let hits = scores
        .iter()
        .zip(uniforms)
        .filter(|(s, u)| **u < sigmoid(intercept + **s))
        .count();
    hits as f64 / scores.len() as f64
}

/// Bisection on the intercept; the positive share is non-decreasing in it.
fn calibrate_intercept(target: f64, scores: &[f64], uniforms: &[f64]) -> Result<f64, GeneratorError> {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if positive_share(mid, scores, uniforms) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let (share_lo, share_hi) = (
        positive_share(lo, scores, uniforms),
        positive_share(hi, scores, uniforms),
    );
    let (b, achieved) = if (share_lo - target).abs() <= (share_hi - target).abs() {
        (lo, share_lo)
    } else {
        (hi, share_hi)
    };
    if (achieved - target).abs() > CALIBRATION_TOLERANCE {
        return Err(GeneratorError::CalibrationFailed { achieved, target });
    }
    Ok(b)
}

/// Feature names used by the default scenario and the builtin programs.
pub mod names {
    pub const LOCATION: &str = "location";
    pub const BUSINESS_UNIT: &str = "business_unit";
    pub const TENURE_BAND: &str = "tenure_band";
    pub const TIME_IN_POSITION_BAND: &str = "time_in_position_band";
    pub const AGE: &str = "age";
    pub const GENDER: &str = "gender";
    pub const PERFORMANCE: &str = "performance";
    pub const POTENTIAL: &str = "potential";
    pub const GRADE: &str = "grade";
    pub const BONUS_LEVEL: &str = "bonus_level";
    pub const CONTRACT_TYPE: &str = "contract_type";
    pub const MANAGER_AGE: &str = "manager_age";
    pub const MANAGER_GENDER: &str = "manager_gender";
    pub const MANAGER_TIME_IN_POSITION_BAND: &str = "manager_time_in_position_band";
    pub const MANAGER_TENURE_BAND: &str = "manager_tenure_band";
    pub const MANAGER_PERFORMANCE: &str = "manager_performance";
    pub const MANAGER_PERFORMANCE_3Y: &str = "manager_performance_3y";
    pub const TEAM_SIZE: &str = "team_size";
    pub const TEAM_HIGH_PERFORMER_SHARE: &str = "team_high_performer_share";
    pub const TEAM_LOW_PERFORMER_SHARE: &str = "team_low_performer_share";
    pub const STATUS: &str = "status";
    pub const EXIT_REASON: &str = "exit_reason";
}

const TENURE_BANDS: [&str; 3] = ["0-2", "3-7", "8+"];
const POSITION_BANDS: [&str; 3] = ["0-2", "2-4", "4+"];
const RATINGS: [&str; 3] = ["Low", "Medium", "High"];

/// Twenty-feature HR schema: location, business unit, individual, manager
/// and team attributes. Location, employee time in position and the two
/// manager seniority bands are actionable.
pub fn default_schema() -> Schema {
    use names::*;
    Schema::new(
        vec![
            FeatureSpec::categorical(LOCATION, &["Location1", "Location2", "Location3", "Remote"]).actionable(),
            FeatureSpec::categorical(BUSINESS_UNIT, &["BU-A", "BU-B", "BU-C", "BU-D"]),
            FeatureSpec::banded(TENURE_BAND, &TENURE_BANDS, Some(vec![3.0, 8.0])),
            FeatureSpec::banded(TIME_IN_POSITION_BAND, &POSITION_BANDS, Some(vec![2.0, 4.0])).actionable(),
            FeatureSpec::numeric(AGE, "years"),
            FeatureSpec::categorical(GENDER, &["F", "M"]),
            FeatureSpec::categorical(PERFORMANCE, &RATINGS),
            FeatureSpec::categorical(POTENTIAL, &RATINGS),
            FeatureSpec::categorical(GRADE, &["G1", "G2", "G3", "G4"]),
            FeatureSpec::categorical(BONUS_LEVEL, &["None", "Standard", "High"]),
            FeatureSpec::categorical(CONTRACT_TYPE, &["Full-time", "Part-time"]),
            FeatureSpec::numeric(MANAGER_AGE, "years"),
            FeatureSpec::categorical(MANAGER_GENDER, &["F", "M"]),
            FeatureSpec::banded(MANAGER_TIME_IN_POSITION_BAND, &POSITION_BANDS, Some(vec![2.0, 4.0])).actionable(),
            FeatureSpec::banded(MANAGER_TENURE_BAND, &TENURE_BANDS, Some(vec![3.0, 8.0])).actionable(),
            FeatureSpec::categorical(MANAGER_PERFORMANCE, &RATINGS),
            FeatureSpec::numeric(MANAGER_PERFORMANCE_3Y, "rating"),
            FeatureSpec::numeric(TEAM_SIZE, "people"),
            FeatureSpec::numeric(TEAM_HIGH_PERFORMER_SHARE, "fraction"),
            FeatureSpec::numeric(TEAM_LOW_PERFORMER_SHARE, "fraction"),
        ],
        STATUS,
    )
    .and_then(|s| s.with_metadata(&[EXIT_REASON]))
    .expect("default schema is valid")
}

fn levels(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// The planted scenario: low performance is the dominant driver, strongest
/// for employees 4+ years in position. New employees under new managers and
/// high performers under long-serving managers also leave often. Location
/// effects are near zero.
///
/// Marginal distributions are assumed defaults, not estimates of any real
/// population.
pub fn default_turnover_scenario() -> GeneratorConfig {
    use names::*;
    let mut effects = BTreeMap::new();
    effects.insert(PERFORMANCE.into(), Effect::Levels(levels(&[("Low", 2.5), ("High", -0.5)])));
    effects.insert(
        TIME_IN_POSITION_BAND.into(),
        Effect::Levels(levels(&[("0-2", 1.0), ("4+", 0.3)])),
    );
    effects.insert(MANAGER_TENURE_BAND.into(), Effect::Levels(levels(&[("0-2", 0.3)])));
    effects.insert(BONUS_LEVEL.into(), Effect::Levels(levels(&[("None", 0.3)])));
    effects.insert(
        LOCATION.into(),
        Effect::Levels(levels(&[("Remote", 0.05), ("Location3", 0.03)])),
    );
    let joint = |pairs: &[(&str, &str)], weight| Interaction {
        conditions: pairs.iter().map(|(f, l)| (f.to_string(), vec![l.to_string()])).collect(),
        weight,
    };
    let interactions = vec![
        joint(&[(PERFORMANCE, "Low"), (TIME_IN_POSITION_BAND, "4+")], 8.0),
        joint(&[(TIME_IN_POSITION_BAND, "0-2"), (MANAGER_TENURE_BAND, "0-2")], 6.0),
        joint(&[(PERFORMANCE, "High"), (MANAGER_TIME_IN_POSITION_BAND, "4+")], 7.0),
        joint(&[(PERFORMANCE, "Low"), (TIME_IN_POSITION_BAND, "0-2")], -3.0),
    ];

    let normal = |mean, sd, min, max, decimals| Marginal::Normal {
        mean,
        sd,
        min,
        max,
        decimals,
    };
    let mut marginals = BTreeMap::new();
    let mut put = |name: &str, m: Marginal| {
        marginals.insert(name.to_string(), m);
    };
    put(LOCATION, Marginal::Levels(levels(&[("Location1", 0.35), ("Location2", 0.25), ("Location3", 0.15), ("Remote", 0.25)])));
    put(BUSINESS_UNIT, Marginal::Levels(levels(&[("BU-A", 0.3), ("BU-B", 0.3), ("BU-C", 0.2), ("BU-D", 0.2)])));
    put(TENURE_BAND, Marginal::Levels(levels(&[("0-2", 0.3), ("3-7", 0.45), ("8+", 0.25)])));
    put(TIME_IN_POSITION_BAND, Marginal::Levels(levels(&[("0-2", 0.35), ("2-4", 0.4), ("4+", 0.25)])));
    put(AGE, normal(38.0, 9.0, 21.0, 65.0, Some(0)));
    put(GENDER, Marginal::Levels(levels(&[("F", 0.45), ("M", 0.55)])));
    put(PERFORMANCE, Marginal::Levels(levels(&[("Low", 0.2), ("Medium", 0.55), ("High", 0.25)])));
    put(POTENTIAL, Marginal::Levels(levels(&[("Low", 0.3), ("Medium", 0.5), ("High", 0.2)])));
    put(GRADE, Marginal::Levels(levels(&[("G1", 0.35), ("G2", 0.35), ("G3", 0.2), ("G4", 0.1)])));
    put(BONUS_LEVEL, Marginal::Levels(levels(&[("None", 0.3), ("Standard", 0.55), ("High", 0.15)])));
    put(CONTRACT_TYPE, Marginal::Levels(levels(&[("Full-time", 0.85), ("Part-time", 0.15)])));
    put(MANAGER_AGE, normal(46.0, 7.0, 28.0, 67.0, Some(0)));
    put(MANAGER_GENDER, Marginal::Levels(levels(&[("F", 0.4), ("M", 0.6)])));
    put(MANAGER_TIME_IN_POSITION_BAND, Marginal::Levels(levels(&[("0-2", 0.35), ("2-4", 0.4), ("4+", 0.25)])));
    put(MANAGER_TENURE_BAND, Marginal::Levels(levels(&[("0-2", 0.2), ("3-7", 0.45), ("8+", 0.35)])));
    put(MANAGER_PERFORMANCE, Marginal::Levels(levels(&[("Low", 0.15), ("Medium", 0.6), ("High", 0.25)])));
    put(MANAGER_PERFORMANCE_3Y, normal(3.2, 0.6, 1.0, 5.0, Some(1)));

    GeneratorConfig {
        n: 1000,
        base_rate: 0.2,
        schema: default_schema(),
        effect_weights: effects,
        interactions,
        noise_scale: 0.2,
        seed: 7,
        marginals,
        manager_pool: Some(ManagerPool {
            mean_team_size: 8.0,
            manager_features: vec![
                MANAGER_AGE.into(),
                MANAGER_GENDER.into(),
                MANAGER_TIME_IN_POSITION_BAND.into(),
                MANAGER_TENURE_BAND.into(),
                MANAGER_PERFORMANCE.into(),
                MANAGER_PERFORMANCE_3Y.into(),
            ],
            team_size_feature: Some(TEAM_SIZE.into()),
            team_high_share_feature: Some(TEAM_HIGH_PERFORMER_SHARE.into()),
            team_low_share_feature: Some(TEAM_LOW_PERFORMER_SHARE.into()),
            performance_feature: PERFORMANCE.into(),
            high_level: "High".into(),
            low_level: "Low".into(),
        }),
        intercept: None,
        years: default_years(),
        exit_reason_column: Some(EXIT_REASON.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn share(ds: &Dataset) -> f64 {
        ds.class_counts().1 as f64 / ds.len() as f64
    }

    #[test]
    fn default_scenario_hits_base_rate() {
        let ds = generate_population(&default_turnover_scenario()).unwrap();
        assert_eq!(ds.len(), 1000);
        let s = share(&ds);
        assert!((0.17..=0.23).contains(&s), "share {s}");
    }

    #[test]
    fn default_scenario_is_deterministic() {
        let cfg = default_turnover_scenario();
        let a = generate_population(&cfg).unwrap();
        let b = generate_population(&cfg).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
    }

    #[test]
    fn zero_weights_give_fair_coin() {
        let mut cfg = default_turnover_scenario();
        cfg.effect_weights.clear();
        cfg.noise_scale = 0.0;
        cfg.base_rate = 0.5;
        let ds = generate_population(&cfg).unwrap();
        let s = share(&ds);
        assert!((0.45..=0.55).contains(&s), "share {s}");
    }

    #[test]
    fn scenario_ordering_and_validity() {
        use names::*;
        let cfg = default_turnover_scenario();
        cfg.validate().unwrap();
        let low = cfg.level_weight(PERFORMANCE, "Low");
        for level in ["Location1", "Location2", "Location3", "Remote"] {
            assert!(low > cfg.level_weight(LOCATION, level));
        }
        assert!(cfg.level_weight(TIME_IN_POSITION_BAND, "4+") > 0.0);
        assert!(cfg.level_weight(TIME_IN_POSITION_BAND, "0-2") > 0.0);
    }

    #[test]
    fn team_features_are_consistent() {
        use names::*;
        let ds = generate_population(&default_turnover_scenario()).unwrap();
        let s = ds.schema();
        let size = s.feature_index(TEAM_SIZE).unwrap();
        let mgr = s.feature_index(MANAGER_AGE).unwrap();
        for r in ds.rows() {
            let n = r.values[size].number().unwrap();
            assert!(n >= 1.0);
            assert!(r.values[mgr].number().unwrap() >= 28.0);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = default_turnover_scenario();
        cfg.base_rate = 1.5;
        assert!(matches!(generate_population(&cfg), Err(GeneratorError::InvalidConfig(_))));
        let mut cfg = default_turnover_scenario();
        cfg.effect_weights
            .insert("location".into(), Effect::Levels(levels(&[("Mars", 1.0)])));
        assert!(cfg.validate().is_err());
        let mut cfg = default_turnover_scenario();
        cfg.effect_weights.insert("nope".into(), Effect::Levels(BTreeMap::new()));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn calibration_failure_reports_achieved_rate() {
        let mut cfg = default_turnover_scenario();
        cfg.n = 3;
        cfg.manager_pool = None;
        cfg.base_rate = 0.5;
        match generate_population(&cfg) {
            Err(GeneratorError::CalibrationFailed { achieved, target }) => {
                assert_eq!(target, 0.5);
                assert!(achieved == 1.0 / 3.0 || achieved == 2.0 / 3.0);
            }
            other => panic!("expected calibration failure, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn raising_a_level_weight_never_lowers_its_positives(
            seed in 0u64..1000,
            base in -1.0f64..1.0,
            bump in 0.0f64..3.0,
            intercept in -3.0f64..0.0,
        ) {
            let mut cfg = default_turnover_scenario();
            cfg.n = 300;
            cfg.seed = seed;
            cfg.intercept = Some(intercept);
            let feature = names::TIME_IN_POSITION_BAND;
            let mut low = cfg.clone();
            low.effect_weights.insert(feature.into(), Effect::Levels(levels(&[("4+", base)])));
            let mut high = cfg.clone();
            high.effect_weights.insert(feature.into(), Effect::Levels(levels(&[("4+", base + bump)])));
            let count = |ds: &Dataset| {
                let c = ds.schema().feature_index(feature).unwrap();
                ds.rows().iter().filter(|r| r.values[c] == Value::Level(2) && r.label == Label::Terminated).count()
            };
            let a = generate_population(&low).unwrap();
            let b = generate_population(&high).unwrap();
            prop_assert!(count(&b) >= count(&a));
        }
    }
}
