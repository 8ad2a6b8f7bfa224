//! Class-imbalance correction for training partitions.

use rand::seq::{index, IndexedRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, EmployeeRecord, Label, Schema, Value};
use crate::seeding::{self, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("rebalancing needs both classes, found {active} Active and {terminated} Terminated")]
    SingleClass { active: usize, terminated: usize },
    #[error("SMOTE with k={k} needs more than {k} minority rows, found {found}")]
    TooFewMinority { k: usize, found: usize },
    #[error("invalid resampling parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Resampling {
    None,
    Down,
    Up,
    Weights,
    Smote { k_neighbors: usize },
    Rose { shrink: f64 },
}

impl Resampling {
    pub fn name(&self) -> String {
        match self {
            Resampling::None => "none".into(),
            Resampling::Down => "down".into(),
            Resampling::Up => "up".into(),
            Resampling::Weights => "weights".into(),
            Resampling::Smote { k_neighbors } => format!("smote(k={k_neighbors})"),
            Resampling::Rose { shrink } => format!("rose(shrink={shrink})"),
        }
    }

    pub fn validate(&self) -> Result<(), BalanceError> {
        match *self {
            Resampling::Smote { k_neighbors } if k_neighbors < 1 => Err(
                BalanceError::InvalidParameter("SMOTE k_neighbors must be >= 1".into()),
            ),
            Resampling::Rose { shrink } if !(shrink > 0.0 && shrink.is_finite()) => Err(
                BalanceError::InvalidParameter("ROSE shrink must be finite and > 0".into()),
            ),
            _ => Ok(()),
        }
    }

    /// The five corrections plus the uncorrected baseline, with default
    /// parameters (SMOTE k=5, ROSE shrink=1).
    pub fn all_defaults() -> Vec<Resampling> {
        vec![
            Resampling::None,
            Resampling::Down,
            Resampling::Up,
            Resampling::Weights,
            Resampling::Smote { k_neighbors: 5 },
            Resampling::Rose { shrink: 1.0 },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplingMethod {
    pub variant: Resampling,
    pub seed: u64,
}

/// Where an output row came from, by input id.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Original(String),
    Resampled(String),
    Synthetic { seed: String, neighbor: String },
    Smoothed(String),
}

impl Provenance {
    /// Input ids this row was derived from.
    pub fn sources(&self) -> Vec<&str> {
        match self {
            Provenance::Original(s) | Provenance::Resampled(s) | Provenance::Smoothed(s) => {
                vec![s.as_str()]
            }
            Provenance::Synthetic { seed, neighbor } => vec![seed.as_str(), neighbor.as_str()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDataset {
    pub dataset: Dataset,
    pub weights: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl WeightedDataset {
    /// Unit weights over an existing dataset.
    pub fn unweighted(ds: Dataset) -> Self {
        let provenance = ds
            .rows()
            .iter()
            .map(|r| Provenance::Original(r.id.clone()))
            .collect();
        WeightedDataset {
            weights: vec![1.0; ds.len()],
            dataset: ds,
            provenance,
        }
    }

    pub fn with_weights(ds: Dataset, weights: Vec<f64>) -> Result<Self, BalanceError> {
        if weights.len() != ds.len() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(BalanceError::InvalidParameter(
                "weights must be finite, positive and one per row".into(),
            ));
        }
        Ok(WeightedDataset {
            weights,
            ..Self::unweighted(ds)
        })
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }
}

fn class_indices(ds: &Dataset) -> Result<(Vec<usize>, Vec<usize>), BalanceError> {
    ds.require_known_labels()?;
    let (mut active, mut terminated) = (Vec::new(), Vec::new());
    for (i, r) in ds.rows().iter().enumerate() {
        match r.label {
            Label::Active => active.push(i),
            _ => terminated.push(i),
        }
    }
    if active.is_empty() || terminated.is_empty() {
        return Err(BalanceError::SingleClass {
            active: active.len(),
            terminated: terminated.len(),
        });
    }
    Ok((active, terminated))
}

/// (minority, majority); Terminated counts as the minority on a tie.
fn minority_majority(ds: &Dataset) -> Result<(Vec<usize>, Vec<usize>), BalanceError> {
    let (active, terminated) = class_indices(ds)?;
    Ok(if active.len() < terminated.len() {
        (active, terminated)
    } else {
        (terminated, active)
    })
}

pub fn rebalance(ds: &Dataset, method: &ResamplingMethod) -> Result<WeightedDataset, BalanceError> {
    method.variant.validate()?;
    let seed = method.seed;
    match method.variant {
        Resampling::None => {
            class_indices(ds)?;
            Ok(WeightedDataset::unweighted(ds.clone()))
        }
        Resampling::Down => {
            let (minority, majority) = minority_majority(ds)?;
            let mut rng = seeding::rng(seed, Stream::Resample);
            let mut keep: Vec<usize> = index::sample(&mut rng, majority.len(), minority.len())
                .into_iter()
                .map(|j| majority[j])
                .collect();
            keep.extend_from_slice(&minority);
            keep.sort_unstable();
            Ok(WeightedDataset::unweighted(ds.subset(&keep)))
        }
        Resampling::Up => {
            let (minority, majority) = minority_majority(ds)?;
            let mut rng = seeding::rng(seed, Stream::Resample);
            let mut rows = ds.rows().to_vec();
            let mut provenance: Vec<Provenance> =
                rows.iter().map(|r| Provenance::Original(r.id.clone())).collect();
            for j in 0..majority.len() - minority.len() {
                let src = &ds.rows()[*minority.choose(&mut rng).expect("non-empty")];
                rows.push(EmployeeRecord {
                    id: format!("{}#up{}", src.id, j + 1),
                    ..src.clone()
                });
                provenance.push(Provenance::Resampled(src.id.clone()));
            }
            Ok(WeightedDataset {
                weights: vec![1.0; rows.len()],
                dataset: ds.with_rows(rows)?,
                provenance,
            })
        }
        Resampling::Weights => {
            let (active, terminated) = class_indices(ds)?;
            let n = ds.len() as f64;
            let w_active = n / (2.0 * active.len() as f64);
            let w_terminated = n / (2.0 * terminated.len() as f64);
            let weights = ds
                .rows()
                .iter()
                .map(|r| match r.label {
                    Label::Active => w_active,
                    _ => w_terminated,
                })
                .collect();
            WeightedDataset::with_weights(ds.clone(), weights)
        }
        Resampling::Smote { k_neighbors } => {
            let (minority, majority) = minority_majority(ds)?;
            let minority_rows: Vec<EmployeeRecord> =
                minority.iter().map(|&i| ds.rows()[i].clone()).collect();
            let synth = smote_synthesize_traced(
                ds.schema(),
                &minority_rows,
                k_neighbors,
                majority.len() - minority.len(),
                seed,
            )?;
            let mut rows = ds.rows().to_vec();
            let mut provenance: Vec<Provenance> =
                rows.iter().map(|r| Provenance::Original(r.id.clone())).collect();
            for s in synth {
                provenance.push(Provenance::Synthetic {
                    seed: minority_rows[s.seed].id.clone(),
                    neighbor: minority_rows[s.neighbor].id.clone(),
                });
                rows.push(s.record);
            }
            Ok(WeightedDataset {
                weights: vec![1.0; rows.len()],
                dataset: ds.with_rows(rows)?,
                provenance,
            })
        }
        Resampling::Rose { shrink } => rose(ds, shrink, seed),
    }
}

/// A SMOTE row with the minority indices it was interpolated between.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoteSample {
    pub record: EmployeeRecord,
    pub seed: usize,
    pub neighbor: usize,
    pub t: f64,
}

/// Mixed-type distance between minority rows: squared standardized
/// Euclidean over numeric features plus the count of categorical mismatches.
struct MixedMetric {
    numeric: Vec<(usize, f64)>,
    categorical: Vec<usize>,
}

impl MixedMetric {
    fn fit(schema: &Schema, rows: &[EmployeeRecord]) -> Self {
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        for (c, f) in schema.features.iter().enumerate() {
            if f.kind.is_numeric() {
                let xs: Vec<f64> = rows.iter().map(|r| r.values[c].number().expect("numeric")).collect();
                numeric.push((c, std_dev(&xs)));
            } else {
                categorical.push(c);
            }
        }
        MixedMetric {
            numeric,
            categorical,
        }
    }

    fn distance2(&self, a: &EmployeeRecord, b: &EmployeeRecord) -> f64 {
        let mut d = 0.0;
        for &(c, sd) in &self.numeric {
            if sd > 0.0 {
                let z = (a.values[c].number().unwrap() - b.values[c].number().unwrap()) / sd;
                d += z * z;
            }
        }
        for &c in &self.categorical {
            if a.values[c] != b.values[c] {
                d += 1.0;
            }
        }
        d
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Indices of the `k` nearest other rows, nearest first, ties by index.
fn nearest_neighbors(metric: &MixedMetric, rows: &[EmployeeRecord], k: usize) -> Vec<Vec<usize>> {
    (0..rows.len())
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..rows.len())
                .filter(|&j| j != i)
                .map(|j| (metric.distance2(&rows[i], &rows[j]), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Generates `count` synthetic minority rows. Each picks a random seed row,
/// one of its `k` nearest minority neighbors, and a uniform point on the
/// segment between them for the numeric features. Categorical features are
/// copied from the seed row.
pub fn smote_synthesize(
    schema: &Schema,
    minority_rows: &[EmployeeRecord],
    k: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<EmployeeRecord>, BalanceError> {
    Ok(smote_synthesize_traced(schema, minority_rows, k, count, seed)?
        .into_iter()
        .map(|s| s.record)
        .collect())
}

pub fn smote_synthesize_traced(
    schema: &Schema,
    minority_rows: &[EmployeeRecord],
    k: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<SmoteSample>, BalanceError> {
    if k < 1 {
        return Err(BalanceError::InvalidParameter("SMOTE k_neighbors must be >= 1".into()));
    }
    if minority_rows.len() <= k {
        return Err(BalanceError::TooFewMinority {
            k,
            found: minority_rows.len(),
        });
    }
    let metric = MixedMetric::fit(schema, minority_rows);
    let neighbors = nearest_neighbors(&metric, minority_rows, k);
    let mut rng = seeding::rng(seed, Stream::Smote);
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let s = rng.random_range(0..minority_rows.len());
        let nb = neighbors[s][rng.random_range(0..k)];
        let t: f64 = rng.random();
        let (a, b) = (&minority_rows[s], &minority_rows[nb]);
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(va, vb)| match (va, vb) {
                (Value::Number(x), Value::Number(y)) => Value::Number(x + t * (y - x)),
                _ => *va,
            })
            .collect();
        out.push(SmoteSample {
            record: EmployeeRecord {
                id: format!("smote{}", j + 1),
                values,
                ..a.clone()
            },
            seed: s,
            neighbor: nb,
            t,
        });
    }
    Ok(out)
}

/// Smoothed bootstrap: the output has the input's size, half drawn from each
/// class. Each row copies a random same-class seed row and adds Gaussian
/// jitter to numeric features with bandwidth
/// `shrink * sd(class, feature) * m^(-1/(d+4))`, where `m` is the class size
/// and `d` the number of numeric features.
fn rose(ds: &Dataset, shrink: f64, seed: u64) -> Result<WeightedDataset, BalanceError> {
    let (active, terminated) = class_indices(ds)?;
    let schema = ds.schema();
    let numeric: Vec<usize> = (0..schema.features.len())
        .filter(|&c| schema.features[c].kind.is_numeric())
        .collect();
    let d = numeric.len() as f64;
    let mut rng = seeding::rng(seed, Stream::Rose);
    let n = ds.len();
    let n_active = n / 2;
    let mut rows = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for (members, size) in [(&active, n_active), (&terminated, n - n_active)] {
        let m = members.len() as f64;
        let factor = shrink * m.powf(-1.0 / (d + 4.0));
        let bandwidth: Vec<f64> = numeric
            .iter()
            .map(|&c| {
                let xs: Vec<f64> = members
                    .iter()
                    .map(|&i| ds.rows()[i].values[c].number().expect("numeric"))
                    .collect();
                factor * sample_std_dev(&xs)
            })
            .collect();
        for _ in 0..size {
            let src = &ds.rows()[*members.choose(&mut rng).expect("non-empty")];
            let mut values = src.values.clone();
            for (&c, h) in numeric.iter().zip(&bandwidth) {
                let z: f64 = StandardNormal.sample(&mut rng);
                if let Value::Number(x) = values[c] {
                    values[c] = Value::Number(x + h * z);
                }
            }
            provenance.push(Provenance::Smoothed(src.id.clone()));
            rows.push(EmployeeRecord {
                id: format!("rose{}", rows.len() + 1),
                values,
                ..src.clone()
            });
        }
    }
    Ok(WeightedDataset {
        weights: vec![1.0; rows.len()],
        dataset: ds.with_rows(rows)?,
        provenance,
    })
}

fn sample_std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}
