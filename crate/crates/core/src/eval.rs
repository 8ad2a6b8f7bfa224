//! Cross-validated model selection and scoring: stratified folds, ROC/AUC,
//! confusion metrics, grid search across classifier and resampling choices,
//! and permutation importance.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::{rebalance, BalanceError, Resampling, ResamplingMethod};
use crate::dataset::{Dataset, Label, Value};
use crate::models::{self, classify, Family, Hyperparameters, ModelError, TrainedModel};
use crate::seeding::{derive, rng, rng_indexed, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("class {class} has {count} rows, fewer than k = {k}")]
    ClassTooSmall { class: Label, count: usize, k: usize },
    #[error("both classes are required, found {positives} Terminated and {negatives} Active")]
    SingleClass { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("row {0} has an Unknown label")]
    UnknownLabel(usize),
    #[error("score at row {0} is not finite")]
    NonFiniteScore(usize),
    #[error("holdout row {id} leaked into the training partition of fold {fold}")]
    Leakage { fold: usize, id: String },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("every grid cell failed")]
    AllCellsFailed,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

fn class_members(labels: &[Label]) -> Result<[Vec<usize>; 2], EvalError> {
    let mut members = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        match l {
            Label::Active => members[0].push(i),
            Label::Terminated => members[1].push(i),
            Label::Unknown => return Err(EvalError::UnknownLabel(i)),
        }
    }
    Ok(members)
}

/// Splits row indices into `k` folds with per-class round-robin assignment.
///
/// Each class is shuffled and dealt to folds in turn; the second class starts
/// where the first stopped, so fold sizes also differ by at most one.
/// Indices within a fold are ascending.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let members = class_members(&ds.labels())?;
    for (class, m) in [Label::Active, Label::Terminated].into_iter().zip(&members) {
        if m.len() < k {
            return Err(EvalError::ClassTooSmall {
                class,
                count: m.len(),
                k,
            });
        }
    }
    let mut r = rng(seed, Stream::Folds);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut m in members {
        m.shuffle(&mut r);
        for i in m {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Repeated stratified holdout: `repeats` independent draws, each holding
/// out `round(fraction * n_c)` rows of every class.
pub fn stratified_holdouts(
    ds: &Dataset,
    fraction: f64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, EvalError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EvalError::InvalidParameter(format!("holdout_fraction {fraction} outside (0, 1)")));
    }
    if repeats == 0 {
        return Err(EvalError::InvalidParameter("repeats must be >= 1".into()));
    }
    let members = class_members(&ds.labels())?;
    (0..repeats)
        .map(|rep| {
            let mut r = rng_indexed(seed, Stream::Folds, rep as u64);
            let mut holdout = Vec::new();
            for (class, m) in [Label::Active, Label::Terminated].into_iter().zip(&members) {
                let take = (fraction * m.len() as f64).round() as usize;
                if take == 0 || take == m.len() {
                    return Err(EvalError::ClassTooSmall {
                        class,
                        count: m.len(),
                        k: 2,
                    });
                }
                let mut m = m.clone();
                m.shuffle(&mut r);
                holdout.extend_from_slice(&m[..take]);
            }
            holdout.sort_unstable();
            Ok(holdout)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false_positive_rate, true_positive_rate)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Two tab-separated columns, `fpr` and `tpr`, with a header line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("fpr\ttpr\n");
        for (x, y) in &self.points {
            let _ = writeln!(s, "{x}\t{y}");
        }
        s
    }
}

/// ROC curve over all distinct score thresholds, highest first. Tied
/// scores form one diagonal step, so the trapezoidal area equals the
/// Mann-Whitney statistic.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<RocCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let members = class_members(labels)?;
    let (neg, pos) = (members[0].len() as u64, members[1].len() as u64);
    if neg == 0 || pos == 0 {
        return Err(EvalError::SingleClass {
            positives: pos as usize,
            negatives: neg as usize,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area in units of one positive-negative pair
    let mut doubled: u128 = 0;
    let mut g = 0;
    while g < order.len() {
        let s = scores[order[g]];
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while g < order.len() && scores[order[g]] == s {
            if labels[order[g]] == Label::Terminated {
                dtp += 1;
            } else {
                dfp += 1;
            }
            g += 1;
        }
        doubled += u128::from(dfp) * u128::from(2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = doubled as f64 / (2 * u128::from(pos) * u128::from(neg)) as f64;
    Ok(RocCurve { points, auc })
}

/// Confusion counts with the leaver flag as the positive class. Ratios with
/// a zero denominator are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    /// Share of flagged leavers that really left: TP / (TP + FP).
    pub paper_specificity: Option<f64>,
    /// Share of stayers correctly flagged as stayers: TN / (TN + FP).
    pub paper_selectivity: Option<f64>,
    /// TP / (TP + FN).
    pub standard_sensitivity: Option<f64>,
    /// TN / (TN + FP).
    pub standard_specificity: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(predicted: &[Label], actual: &[Label]) -> Result<ConfusionMetrics, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            scores: predicted.len(),
            labels: actual.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (i, (p, a)) in predicted.iter().zip(actual).enumerate() {
        match (p, a) {
            (_, Label::Unknown) | (Label::Unknown, _) => return Err(EvalError::UnknownLabel(i)),
            (Label::Terminated, Label::Terminated) => tp += 1,
            (Label::Terminated, Label::Active) => fp += 1,
            (Label::Active, Label::Active) => tn += 1,
            (Label::Active, Label::Terminated) => fn_ += 1,
        }
    }
    Ok(ConfusionMetrics {
        true_positive: tp,
        false_positive: fp,
        true_negative: tn,
        false_negative: fn_,
        paper_specificity: ratio(tp, tp + fp),
        paper_selectivity: ratio(tn, tn + fp),
        standard_sensitivity: ratio(tp, tp + fn_),
        standard_specificity: ratio(tn, tn + fp),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold_index: usize,
    pub auc: f64,
    #[serde(flatten)]
    pub confusion: ConfusionMetrics,
}

/// Scores a fitted model on labelled data at its own threshold.
pub fn evaluate(model: &TrainedModel, ds: &Dataset) -> Result<(RocCurve, ConfusionMetrics), EvalError> {
    let p = model.predict_proba(ds)?;
    let labels = ds.labels();
    let roc = roc_auc(&p, &labels)?;
    let confusion = confusion_metrics(&classify(&p, model.threshold), &labels)?;
    Ok((roc, confusion))
}

/// One classifier configuration under one resampling method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hyperparameters: Hyperparameters,
    pub resampling: Resampling,
}

impl GridCell {
    pub fn family(&self) -> Family {
        self.hyperparameters.family()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Classifier configurations in declaration order.
    pub configs: Vec<Hyperparameters>,
    pub resamplings: Vec<Resampling>,
    pub k: usize,
    pub seed: u64,
    /// When set, each of the `k` evaluations is an independent stratified
    /// holdout of this fraction instead of a fold of a partition.
    #[serde(default)]
    pub holdout_fraction: Option<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    models::DEFAULT_THRESHOLD
}

impl GridSpec {
    /// Cells in declaration order: configurations outer, resampling inner.
    pub fn cells(&self) -> Vec<GridCell> {
        self.configs
            .iter()
            .flat_map(|&hp| {
                self.resamplings.iter().map(move |&r| GridCell {
                    hyperparameters: hp,
                    resampling: r,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub family: Family,
    #[serde(flatten)]
    pub cell: GridCell,
    pub folds: Vec<FoldMetrics>,
    pub mean_auc: Option<f64>,
    pub sd_auc: Option<f64>,
    pub mean_paper_specificity: Option<f64>,
    pub mean_paper_selectivity: Option<f64>,
    /// First failure encountered; the cell is then excluded from selection.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub holdout_fraction: Option<f64>,
    pub selection_metric: String,
    pub cells: Vec<CellResult>,
    /// Index into `cells`.
    pub best: usize,
}

impl CvReport {
    pub fn best_cell(&self) -> &CellResult {
        &self.cells[self.best]
    }

    /// The winning configuration with its resampling seed.
    pub fn best_config(&self) -> (Family, Hyperparameters, ResamplingMethod) {
        let c = self.best_cell();
        (
            c.family,
            c.cell.hyperparameters,
            ResamplingMethod {
                variant: c.cell.resampling,
                seed: derive(self.seed, REFIT_INDEX),
            },
        )
    }

    pub fn find(&self, family: Family, resampling: &Resampling) -> Vec<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.family == family && c.cell.resampling == *resampling)
            .collect()
    }

    /// Highest mean AUC among cells of `family` under `resampling`.
    pub fn best_mean_auc(&self, family: Family, resampling: &Resampling) -> Option<f64> {
        self.find(family, resampling)
            .iter()
            .filter_map(|c| c.mean_auc)
            .fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
    }

    /// Plain-text table: sampling, algorithm, parameters, ROC, Spe., Sel.
    pub fn to_table(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.3}"));
        let mut s = format!(
            "{:<18} {:<13} {:<32} {:>6} {:>6} {:>6} {:>6}\n",
            "Sampling", "Algorithm", "Parameters", "ROC", "sd", "Spe.", "Sel."
        );
        for (i, c) in self.cells.iter().enumerate() {
            let mark = if i == self.best { " *" } else { "" };
            if let Some(e) = &c.error {
                let _ = writeln!(
                    s,
                    "{:<18} {:<13} {:<32} failed: {e}",
                    c.cell.resampling.name(),
                    c.family.to_string(),
                    c.cell.hyperparameters.describe()
                );
                continue;
            }
            let _ = writeln!(
                s,
                "{:<18} {:<13} {:<32} {:>6} {:>6} {:>6} {:>6}{mark}",
                c.cell.resampling.name(),
                c.family.to_string(),
                c.cell.hyperparameters.describe(),
                fmt(c.mean_auc),
                fmt(c.sd_auc),
                fmt(c.mean_paper_specificity),
                fmt(c.mean_paper_selectivity),
            );
        }
        s
    }
}

const REFIT_INDEX: u64 = u32::MAX as u64;

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        Some((xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), sd)
}

fn run_fold(
    train: &Dataset,
    holdout: &[usize],
    fold: usize,
    cell: &GridCell,
    features: &[String],
    spec: &GridSpec,
) -> Result<FoldMetrics, EvalError> {
    let held: HashSet<usize> = holdout.iter().copied().collect();
    let train_idx: Vec<usize> = (0..train.len()).filter(|i| !held.contains(i)).collect();
    let fit_part = train.subset(&train_idx);
    let test_part = train.subset(holdout);
    let method = ResamplingMethod {
        variant: cell.resampling,
        seed: derive(spec.seed, fold as u64),
    };
    let weighted = rebalance(&fit_part, &method)?;
    let holdout_ids: HashSet<&str> = test_part.ids().into_iter().collect();
    for (row, prov) in weighted.dataset.rows().iter().zip(&weighted.provenance) {
        let leaked = std::iter::once(row.id.as_str())
            .chain(prov.sources())
            .find(|id| holdout_ids.contains(id));
        if let Some(id) = leaked {
            return Err(EvalError::Leakage {
                fold,
                id: id.to_string(),
            });
        }
    }
    let model = models::fit(&weighted, &cell.hyperparameters, features, derive(spec.seed, 1 << 20 | fold as u64))?
        .with_threshold(spec.threshold)?;
    let (roc, confusion) = evaluate(&model, &test_part)?;
    Ok(FoldMetrics {
        fold_index: fold,
        auc: roc.auc,
        confusion,
    })
}

/// Evaluates every (configuration, resampling) cell on the same folds.
/// Resampling is applied to each fold's training portion only. The best
/// cell maximizes mean AUC; exact ties go to the simpler configuration of
/// the same family, then to declaration order.
pub fn grid_search(train: &Dataset, features: &[String], spec: &GridSpec) -> Result<CvReport, EvalError> {
    if !(spec.threshold > 0.0 && spec.threshold < 1.0) {
        return Err(ModelError::InvalidThreshold(spec.threshold).into());
    }
    let cells = spec.cells();
    if cells.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    for r in &spec.resamplings {
        r.validate()?;
    }
    let holdouts = match spec.holdout_fraction {
        Some(f) => stratified_holdouts(train, f, spec.k, spec.seed)?,
        None => stratified_kfold(train, spec.k, spec.seed)?,
    };
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..holdouts.len()).map(move |f| (c, f)))
        .collect();
    let outcomes: Vec<Result<FoldMetrics, EvalError>> = jobs
        .par_iter()
        .map(|&(c, f)| run_fold(train, &holdouts[f], f, &cells[c], features, spec))
        .collect();
    if let Some(Err(e @ EvalError::Leakage { .. })) = outcomes.iter().find(|o| matches!(o, Err(EvalError::Leakage { .. }))) {
        return Err(e.clone());
    }

    let mut results = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let chunk = &outcomes[c * holdouts.len()..(c + 1) * holdouts.len()];
        let error = chunk.iter().find_map(|o| o.as_ref().err().map(|e| e.to_string()));
        let folds: Vec<FoldMetrics> = chunk.iter().filter_map(|o| o.as_ref().ok().cloned()).collect();
        let complete = error.is_none();
        let aucs: Vec<f64> = folds.iter().map(|f| f.auc).collect();
        let (mean_auc, sd_auc) = if complete { mean_sd(&aucs) } else { (None, None) };
        let mean_of = |get: fn(&ConfusionMetrics) -> Option<f64>| {
            let xs: Vec<f64> = folds.iter().filter_map(|f| get(&f.confusion)).collect();
            if complete { mean_sd(&xs).0 } else { None }
        };
        results.push(CellResult {
            family: cell.family(),
            cell: *cell,
            mean_paper_specificity: mean_of(|m| m.paper_specificity),
            mean_paper_selectivity: mean_of(|m| m.paper_selectivity),
            folds,
            mean_auc,
            sd_auc,
            error,
        });
    }
    let best = select_best(&results).ok_or(EvalError::AllCellsFailed)?;
    Ok(CvReport {
        k: spec.k,
        seed: spec.seed,
        holdout_fraction: spec.holdout_fraction,
        selection_metric: "mean_auc".into(),
        cells: results,
        best,
    })
}

fn simpler(a: &GridCell, b: &GridCell) -> bool {
    a.family() == b.family()
        && a.hyperparameters
            .complexity()
            .partial_cmp(&b.hyperparameters.complexity())
            .is_some_and(|o| o.is_lt())
}

fn select_best(results: &[CellResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        let Some(auc) = r.mean_auc else { continue };
        match best {
            None => best = Some(i),
            Some(b) => {
                let b_auc = results[b].mean_auc.expect("selected cells have a mean");
                if auc > b_auc || (auc == b_auc && simpler(&r.cell, &results[b].cell)) {
                    best = Some(i);
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean of `baseline_auc - permuted_auc` over repetitions.
    pub mean_drop: f64,
    /// Standard error of the mean drop; zero with one repetition.
    pub std_error: f64,
    pub drops: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_auc: f64,
    pub repetitions: usize,
    pub seed: u64,
    /// In the model's feature order.
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    /// Features by decreasing mean drop, ties by name.
    pub fn ranked(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<&FeatureImportance> = self.features.iter().collect();
        v.sort_by(|a, b| b.mean_drop.total_cmp(&a.mean_drop).then_with(|| a.feature.cmp(&b.feature)));
        v
    }

    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.ranked().iter().position(|f| f.feature == feature)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "baseline AUC {:.4}, {} repetition(s)\n{:<4} {:<34} {:>10} {:>10}\n",
            self.baseline_auc, self.repetitions, "rank", "feature", "AUC drop", "std err"
        );
        for (i, f) in self.ranked().iter().enumerate() {
            let _ = writeln!(s, "{:<4} {:<34} {:>10.4} {:>10.4}", i + 1, f.feature, f.mean_drop, f.std_error);
        }
        s
    }
}

/// Mean AUC drop when each model feature is independently shuffled across
/// rows, `repetitions` times per feature.
pub fn permutation_importance(
    model: &TrainedModel,
    ds: &Dataset,
    repetitions: usize,
    seed: u64,
) -> Result<ImportanceReport, EvalError> {
    if repetitions == 0 {
        return Err(EvalError::InvalidParameter("repetitions must be >= 1".into()));
    }
    let cols = model.check_compatible(ds)?;
    let labels = ds.labels();
    let rows: Vec<Vec<Value>> = ds
        .rows()
        .iter()
        .map(|r| cols.iter().map(|&c| r.values[c]).collect())
        .collect();
    let baseline_auc = roc_auc(&model.score_rows(&rows), &labels)?.auc;
    let features = model
        .features
        .par_iter()
        .enumerate()
        .map(|(j, spec)| {
            let drops = (0..repetitions)
                .map(|rep| {
                    let mut r = rng_indexed(derive(seed, j as u64), Stream::Permutation, rep as u64);
                    let mut column: Vec<Value> = rows.iter().map(|row| row[j]).collect();
                    column.shuffle(&mut r);
                    let permuted: Vec<Vec<Value>> = rows
                        .iter()
                        .zip(column)
                        .map(|(row, v)| {
                            let mut row = row.clone();
                            row[j] = v;
                            row
                        })
                        .collect();
                    Ok(baseline_auc - roc_auc(&model.score_rows(&permuted), &labels)?.auc)
                })
                .collect::<Result<Vec<f64>, EvalError>>()?;
            let (mean, sd) = mean_sd(&drops);
            Ok(FeatureImportance {
                feature: spec.name.clone(),
                mean_drop: mean.expect("at least one repetition"),
                std_error: sd.map_or(0.0, |s| s / (repetitions as f64).sqrt()),
                drops,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(ImportanceReport {
        baseline_auc,
        repetitions,
        seed,
        features,
    })
}
