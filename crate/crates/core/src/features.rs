//! Mutual-information filter feature selection.
//!
//! Every feature is discretized, cross-tabulated against the
//! Active/Terminated label and scored with the plug-in mutual information
//! estimate in nats. The top fraction of features by score is kept.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, FeatureKind, Label, Schema, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("contingency table is empty")]
    EmptyTable,
    #[error("contingency table dimensions do not match its level lists")]
    DimensionMismatch,
    #[error("numeric feature {0:?} has no binning rule")]
    MissingRule(String),
    #[error("binning rule names unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("feature {feature:?} has {distinct} distinct values, fewer than {bins} bins")]
    TooFewDistinct {
        feature: String,
        distinct: usize,
        bins: usize,
    },
    #[error("equal-frequency binning needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("feature {0:?} is numeric; discretize the dataset first")]
    NotDiscretized(String),
    #[error("keep fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Joint counts of a discrete feature (rows) against the label (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub x_levels: Vec<String>,
    pub y_levels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(
        x_levels: Vec<String>,
        y_levels: Vec<String>,
        counts: Vec<Vec<u64>>,
    ) -> Result<Self, FeatureError> {
        if counts.len() != x_levels.len() || counts.iter().any(|r| r.len() != y_levels.len()) {
            return Err(FeatureError::DimensionMismatch);
        }
        let t = ContingencyTable {
            x_levels,
            y_levels,
            counts,
        };
        if t.total() == 0 {
            return Err(FeatureError::EmptyTable);
        }
        Ok(t)
    }

    /// Table with generated level names, handy for tests and oracles.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, FeatureError> {
        let rows = counts.len();
        let cols = counts.first().map_or(0, |r| r.len());
        Self::new(
            (0..rows).map(|i| format!("x{i}")).collect(),
            (0..cols).map(|j| format!("y{j}")).collect(),
            counts,
        )
    }

    /// Cross-tabulates a discrete feature against Active/Terminated.
    pub fn from_feature(ds: &Dataset, feature: usize) -> Result<Self, FeatureError> {
        let spec = &ds.schema().features[feature];
        let levels = spec
            .kind
            .levels()
            .ok_or_else(|| FeatureError::NotDiscretized(spec.name.clone()))?;
        let mut counts = vec![vec![0u64; 2]; levels.len()];
        for (i, r) in ds.rows().iter().enumerate() {
            let col = match r.label {
                Label::Active => 0,
                Label::Terminated => 1,
                Label::Unknown => {
                    return Err(DatasetError::UnknownLabelPresent { row: i + 1 }.into())
                }
            };
            let level = r.values[feature].level().expect("discrete feature");
            counts[level][col] += 1;
        }
        Self::new(
            levels.to_vec(),
            vec![Label::Active.to_string(), Label::Terminated.to_string()],
            counts,
        )
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn transpose(&self) -> Self {
        let counts = (0..self.y_levels.len())
            .map(|j| self.counts.iter().map(|row| row[j]).collect())
            .collect();
        ContingencyTable {
            x_levels: self.y_levels.clone(),
            y_levels: self.x_levels.clone(),
            counts,
        }
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_totals(&self) -> Vec<u64> {
        (0..self.y_levels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Entropy of the row variable, nats.
    pub fn entropy_x(&self) -> f64 {
        entropy(&self.row_totals(), self.total())
    }

    /// Entropy of the column variable, nats.
    pub fn entropy_y(&self) -> f64 {
        entropy(&self.column_totals(), self.total())
    }
}

fn entropy(marginal: &[u64], total: u64) -> f64 {
    let n = total as f64;
    -marginal
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Plug-in mutual information in nats:
/// `sum p(x,y) ln(p(x,y) / (p(x) p(y)))` over cells with non-zero count.
///
/// Computed as `sum (c/N) ln(c N / (r_x c_y))` so the log argument is an
/// exact ratio of integer products. Tiny negative round-off is clamped to 0.
pub fn mutual_information(table: &ContingencyTable) -> Result<f64, FeatureError> {
    let total = table.total();
    if total == 0 {
        return Err(FeatureError::EmptyTable);
    }
    let n = total as f64;
    let rows = table.row_totals();
    let cols = table.column_totals();
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            mi += (c / n) * ((c * n) / (rows[i] as f64 * cols[j] as f64)).ln();
        }
    }
    Ok(mi.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub mi_nats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningStrategy {
    /// Explicit cut points: band `i` holds values with exactly `i` cut
    /// points `<=` the value.
    DeclaredBands { cut_points: Vec<f64> },
    EqualFrequency { bins: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningRule {
    pub feature: String,
    pub strategy: BinningStrategy,
}

impl BinningRule {
    pub fn equal_frequency(feature: &str, bins: usize) -> Self {
        BinningRule {
            feature: feature.to_string(),
            strategy: BinningStrategy::EqualFrequency { bins },
        }
    }
}

/// Bin edges learned on one dataset, reusable on others with the same schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub edges: BTreeMap<String, Vec<f64>>,
}

impl Discretizer {
    /// Learns edges from `ds` for every numeric feature.
    pub fn fit(ds: &Dataset, rules: &[BinningRule]) -> Result<Self, FeatureError> {
        let schema = ds.schema();
        for r in rules {
            if schema.feature(&r.feature).is_none() {
                return Err(FeatureError::UnknownFeature(r.feature.clone()));
            }
        }
        let mut edges = BTreeMap::new();
        for (c, spec) in schema.features.iter().enumerate() {
            if !spec.kind.is_numeric() {
                continue;
            }
            let rule = rules
                .iter()
                .find(|r| r.feature == spec.name)
                .ok_or_else(|| FeatureError::MissingRule(spec.name.clone()))?;
            let cuts = match &rule.strategy {
                BinningStrategy::DeclaredBands { cut_points } => {
                    if cut_points.is_empty()
                        || cut_points.iter().any(|c| !c.is_finite())
                        || cut_points.windows(2).any(|w| w[0] >= w[1])
                    {
                        return Err(FeatureError::Dataset(DatasetError::InvalidSchema(format!(
                            "cut points for {:?} must be non-empty, finite and increasing",
                            spec.name
                        ))));
                    }
                    cut_points.clone()
                }
                BinningStrategy::EqualFrequency { bins } => {
                    let values: Vec<f64> = ds
                        .rows()
                        .iter()
                        .map(|r| r.values[c].number().expect("numeric"))
                        .collect();
                    equal_frequency_edges(&spec.name, values, *bins)?
                }
            };
            edges.insert(spec.name.clone(), cuts);
        }
        Ok(Discretizer { edges })
    }

    /// Replaces every numeric feature by an ordinal band feature.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset, FeatureError> {
        let schema = ds.schema();
        let mut features = schema.features.clone();
        let mut cut_columns = Vec::new();
        for (c, spec) in features.iter_mut().enumerate() {
            if !spec.kind.is_numeric() {
                continue;
            }
            let cuts = self
                .edges
                .get(&spec.name)
                .ok_or_else(|| FeatureError::MissingRule(spec.name.clone()))?;
            spec.kind = FeatureKind::OrdinalBand {
                bands: band_labels(cuts),
                cut_points: Some(cuts.clone()),
            };
            cut_columns.push((c, cuts));
        }
        let new_schema = Arc::new(Schema {
            features,
            ..schema.clone()
        });
        let rows = ds
            .rows()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                for (c, cuts) in &cut_columns {
                    let x = r.values[*c].number().expect("numeric");
                    r.values[*c] = Value::Level(cuts.iter().filter(|&&e| e <= x).count() as u32);
                }
                r
            })
            .collect();
        Ok(Dataset::new(new_schema, rows)?)
    }
}

/// Learns edges on `ds` and returns the discretized dataset with them.
pub fn discretize(ds: &Dataset, rules: &[BinningRule]) -> Result<(Dataset, Discretizer), FeatureError> {
    let d = Discretizer::fit(ds, rules)?;
    let out = d.apply(ds)?;
    Ok((out, d))
}

fn equal_frequency_edges(name: &str, mut values: Vec<f64>, bins: usize) -> Result<Vec<f64>, FeatureError> {
    if bins < 2 {
        return Err(FeatureError::TooFewBins(bins));
    }
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    if distinct.len() < bins {
        return Err(FeatureError::TooFewDistinct {
            feature: name.to_string(),
            distinct: distinct.len(),
            bins,
        });
    }
    let n = values.len();
    let mut edges: Vec<f64> = (1..bins)
        .map(|j| values[j * n / bins])
        .filter(|&e| e > values[0])
        .collect();
    edges.dedup();
    if edges.is_empty() {
        // heavy mass on the minimum: split just above it
        edges.push(distinct[1]);
    }
    Ok(edges)
}

fn band_labels(cuts: &[f64]) -> Vec<String> {
    let mut labels = Vec::with_capacity(cuts.len() + 1);
    labels.push(format!("<{}", cuts[0]));
    for w in cuts.windows(2) {
        labels.push(format!("[{},{})", w[0], w[1]));
    }
    labels.push(format!(">={}", cuts[cuts.len() - 1]));
    labels
}

/// Scores sorted by descending MI, plus the selected feature names in the
/// same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub scores: Vec<FeatureScore>,
    pub selected: Vec<String>,
}

impl FeatureRanking {
    pub fn is_selected(&self, feature: &str) -> bool {
        self.selected.iter().any(|s| s == feature)
    }

    /// Plain-text table: rank, feature, MI, kept flag.
    pub fn to_text(&self) -> String {
        let width = self.scores.iter().map(|s| s.feature.len()).max().unwrap_or(7).max(7);
        let mut out = String::new();
        let _ = writeln!(out, "{:>4}  {:<width$}  {:>10}  kept", "rank", "feature", "mi_nats");
        for (i, s) in self.scores.iter().enumerate() {
            let kept = if self.is_selected(&s.feature) { "yes" } else { "no" };
            let _ = writeln!(out, "{:>4}  {:<width$}  {:>10.6}  {}", i + 1, s.feature, s.mi_nats, kept);
        }
        out
    }
}

/// Ranks every feature of a discretized dataset by MI with the label and
/// keeps the top `ceil(keep_fraction * p)`. Equal scores are ordered by
/// ascending feature name.
pub fn rank_and_filter(ds: &Dataset, keep_fraction: f64) -> Result<FeatureRanking, FeatureError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(FeatureError::InvalidFraction(keep_fraction));
    }
    ds.require_known_labels()?;
    let schema = ds.schema();
    if let Some(f) = schema.features.iter().find(|f| f.kind.is_numeric()) {
        return Err(FeatureError::NotDiscretized(f.name.clone()));
    }
    if ds.is_empty() {
        return Err(FeatureError::EmptyTable);
    }
    let mut scores = (0..schema.features.len())
        .into_par_iter()
        .map(|c| {
            let table = ContingencyTable::from_feature(ds, c)?;
            Ok(FeatureScore {
                feature: schema.features[c].name.clone(),
                mi_nats: mutual_information(&table)?,
            })
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;
    scores.sort_by(|a, b| {
        b.mi_nats
            .total_cmp(&a.mi_nats)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    let keep = ((keep_fraction * scores.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let selected = scores.iter().take(keep).map(|s| s.feature.clone()).collect();
    Ok(FeatureRanking { scores, selected })
}
