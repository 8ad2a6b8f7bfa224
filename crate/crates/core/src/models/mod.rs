//! Classifier families trained from scratch: naive Bayes, linear
//! discriminant analysis, RBF-kernel SVM, and CART trees (single, bagged,
//! random forest).
//!
//! Every family consumes a [`WeightedDataset`] restricted to a selected
//! feature list and yields a [`TrainedModel`] whose `predict_proba` returns
//! the probability of `Terminated`. Models carry a fingerprint of the
//! selected features' names and value domains and refuse datasets whose
//! schema disagrees.

mod encoding;
mod lda;
mod naive_bayes;
mod svm;
mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::balance::WeightedDataset;
use crate::dataset::{Dataset, DatasetError, FeatureKind, FeatureSpec, Label, Value};

pub use encoding::{Encoder, Encoding};
pub use lda::LdaState;
pub use naive_bayes::NaiveBayesState;
pub use svm::{kkt_violations, SvmState};
pub use tree::{bootstrap_counts, Split, TreeModel, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dataset fingerprint {found} does not match model fingerprint {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("selected feature {0:?} is not in the dataset schema")]
    MissingFeature(String),
    #[error("no features selected")]
    NoFeatures,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("training data needs both classes, found {active} Active and {terminated} Terminated")]
    SingleClass { active: usize, terminated: usize },
    #[error("pooled covariance is singular at ridge {ridge}; use a positive ridge")]
    SingularCovariance { ridge: f64 },
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("training weights must be finite, positive and one per row")]
    InvalidWeights,
    #[error("model document is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    NaiveBayes,
    Lda,
    SvmRbf,
    Tree,
    TreeBag,
    RandomForest,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::NaiveBayes => "NB",
            Family::Lda => "LDA",
            Family::SvmRbf => "SVM (Radial)",
            Family::Tree => "Tree",
            Family::TreeBag => "Treebag",
            Family::RandomForest => "RF",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    /// Minimum total training weight in each child.
    pub min_leaf: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Hyperparameters {
    NaiveBayes {
        laplace_alpha: f64,
    },
    Lda {
        ridge: f64,
    },
    SvmRbf {
        cost: f64,
        gamma: f64,
        smo_tolerance: f64,
        max_passes: usize,
    },
    Tree(TreeParams),
    TreeBag {
        n_trees: usize,
        tree: TreeParams,
    },
    RandomForest {
        n_trees: usize,
        mtry: usize,
        tree: TreeParams,
    },
}

impl Hyperparameters {
    pub fn family(&self) -> Family {
        match self {
            Hyperparameters::NaiveBayes { .. } => Family::NaiveBayes,
            Hyperparameters::Lda { .. } => Family::Lda,
            Hyperparameters::SvmRbf { .. } => Family::SvmRbf,
            Hyperparameters::Tree(_) => Family::Tree,
            Hyperparameters::TreeBag { .. } => Family::TreeBag,
            Hyperparameters::RandomForest { .. } => Family::RandomForest,
        }
    }

    pub fn svm(cost: f64, gamma: f64) -> Self {
        Hyperparameters::SvmRbf {
            cost,
            gamma,
            smo_tolerance: 1e-3,
            max_passes: 1000,
        }
    }

    pub fn forest(n_trees: usize, mtry: usize) -> Self {
        Hyperparameters::RandomForest {
            n_trees,
            mtry,
            tree: TreeParams::default(),
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperparameters(m.to_string()));
        let check_tree = |t: &TreeParams| {
            if t.max_depth == Some(0) {
                return bad("max_depth must be >= 1");
            }
            if !(t.min_leaf > 0.0 && t.min_leaf.is_finite()) {
                return bad("min_leaf must be > 0");
            }
            Ok(())
        };
        match self {
            Hyperparameters::NaiveBayes { laplace_alpha } => {
                if !(*laplace_alpha >= 0.0 && laplace_alpha.is_finite()) {
                    return bad("laplace_alpha must be >= 0");
                }
            }
            Hyperparameters::Lda { ridge } => {
                if !(*ridge >= 0.0 && ridge.is_finite()) {
                    return bad("ridge must be >= 0");
                }
            }
            Hyperparameters::SvmRbf {
                cost,
                gamma,
                smo_tolerance,
                max_passes,
            } => {
                if !(*cost > 0.0 && cost.is_finite()) {
                    return bad("cost must be > 0");
                }
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return bad("gamma must be > 0");
                }
                if !(*smo_tolerance > 0.0 && smo_tolerance.is_finite()) {
                    return bad("smo_tolerance must be > 0");
                }
                if *max_passes == 0 {
                    return bad("max_passes must be >= 1");
                }
            }
            Hyperparameters::Tree(t) => check_tree(t)?,
            Hyperparameters::TreeBag { n_trees, tree } => {
                if *n_trees == 0 {
                    return bad("n_trees must be >= 1");
                }
                check_tree(tree)?;
            }
            Hyperparameters::RandomForest {
                n_trees,
                mtry,
                tree,
            } => {
                if *n_trees == 0 {
                    return bad("n_trees must be >= 1");
                }
                if *mtry == 0 || *mtry > n_features {
                    return Err(ModelError::InvalidHyperparameters(format!(
                        "mtry {mtry} must lie in 1..={n_features}"
                    )));
                }
                check_tree(tree)?;
            }
        }
        Ok(())
    }

    /// Ordering key for tie-breaks among configs of one family: smaller is
    /// simpler (fewer trees, shallower trees, stronger regularization).
    pub fn complexity(&self) -> Vec<f64> {
        let depth = |t: &TreeParams| t.max_depth.map_or(f64::INFINITY, |d| d as f64);
        match self {
            Hyperparameters::NaiveBayes { laplace_alpha } => vec![-laplace_alpha],
            Hyperparameters::Lda { ridge } => vec![-ridge],
            Hyperparameters::SvmRbf { cost, gamma, .. } => vec![*cost, *gamma],
            Hyperparameters::Tree(t) => vec![depth(t), -t.min_leaf],
            Hyperparameters::TreeBag { n_trees, tree } => {
                vec![*n_trees as f64, depth(tree), -tree.min_leaf]
            }
            Hyperparameters::RandomForest {
                n_trees,
                mtry,
                tree,
            } => vec![*n_trees as f64, *mtry as f64, depth(tree), -tree.min_leaf],
        }
    }

    /// Short human-readable parameter summary.
    pub fn describe(&self) -> String {
        let depth = |t: &TreeParams| t.max_depth.map_or("inf".to_string(), |d| d.to_string());
        match self {
            Hyperparameters::NaiveBayes { laplace_alpha } => format!("alpha={laplace_alpha}"),
            Hyperparameters::Lda { ridge } => format!("ridge={ridge}"),
            Hyperparameters::SvmRbf { cost, gamma, .. } => format!("C={cost} gamma={gamma}"),
            Hyperparameters::Tree(t) => format!("depth={} min_leaf={}", depth(t), t.min_leaf),
            Hyperparameters::TreeBag { n_trees, tree } => {
                format!("trees={n_trees} depth={}", depth(tree))
            }
            Hyperparameters::RandomForest {
                n_trees,
                mtry,
                tree,
            } => format!("trees={n_trees} mtry={mtry} depth={}", depth(tree)),
        }
    }
}

/// Default search grid for a family over `p` selected features.
pub fn default_grid(family: Family, p: usize) -> Vec<Hyperparameters> {
    let p = p.max(1);
    match family {
        Family::NaiveBayes => [0.0, 1.0]
            .iter()
            .map(|&a| Hyperparameters::NaiveBayes { laplace_alpha: a })
            .collect(),
        Family::Lda => [1e-6, 1e-3, 1e-1]
            .iter()
            .map(|&r| Hyperparameters::Lda { ridge: r })
            .collect(),
        Family::SvmRbf => {
            let mut g = Vec::new();
            for cost in [0.1, 1.0, 10.0] {
                for gamma in [0.01, 0.1, 1.0] {
                    g.push(Hyperparameters::svm(cost, gamma));
                }
            }
            g
        }
        Family::Tree => [Some(4), Some(8), None]
            .iter()
            .map(|&d| {
                Hyperparameters::Tree(TreeParams {
                    max_depth: d,
                    min_leaf: 1.0,
                })
            })
            .collect(),
        Family::TreeBag => vec![Hyperparameters::TreeBag {
            n_trees: 100,
            tree: TreeParams::default(),
        }],
        Family::RandomForest => {
            let mut mtrys = vec![((p as f64).sqrt().floor() as usize).max(1), (p / 3).max(1), p];
            mtrys.dedup();
            let mut g = Vec::new();
            for n_trees in [100, 300] {
                let mut seen = Vec::new();
                for &m in &mtrys {
                    if !seen.contains(&m) {
                        seen.push(m);
                        g.push(Hyperparameters::forest(n_trees, m));
                    }
                }
            }
            g
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedState {
    NaiveBayes(NaiveBayesState),
    Lda(LdaState),
    Svm(SvmState),
    Tree(TreeModel),
    Ensemble { trees: Vec<TreeModel> },
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: Family,
    pub hyperparameters: Hyperparameters,
    /// Selected features, in the order the fitted state indexes them.
    pub features: Vec<FeatureSpec>,
    pub schema_fingerprint: String,
    pub threshold: f64,
    pub class_labels: [Label; 2],
    pub state: FittedState,
    /// Non-fatal training diagnostics, e.g. SMO stopping at its iteration cap.
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct FingerprintEntry<'a> {
    name: &'a str,
    kind: &'a FeatureKind,
}

/// SHA-256 over the names and value domains of `features`, in order.
pub fn fingerprint(features: &[FeatureSpec]) -> String {
    let entries: Vec<FingerprintEntry> = features
        .iter()
        .map(|f| FingerprintEntry {
            name: &f.name,
            kind: &f.kind,
        })
        .collect();
    let bytes = serde_json::to_vec(&entries).expect("fingerprint entries serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Selected-feature view of a dataset: column indices and specs.
fn resolve_features(ds: &Dataset, selected: &[String]) -> Result<(Vec<usize>, Vec<FeatureSpec>), ModelError> {
    if selected.is_empty() {
        return Err(ModelError::NoFeatures);
    }
    let schema = ds.schema();
    let mut cols = Vec::with_capacity(selected.len());
    let mut specs = Vec::with_capacity(selected.len());
    for name in selected {
        let c = schema
            .feature_index(name)
            .ok_or_else(|| ModelError::MissingFeature(name.clone()))?;
        cols.push(c);
        specs.push(schema.features[c].clone());
    }
    Ok((cols, specs))
}

fn project(ds: &Dataset, cols: &[usize], order: &[usize]) -> Vec<Vec<Value>> {
    order
        .iter()
        .map(|&i| {
            let r = &ds.rows()[i];
            cols.iter().map(|&c| r.values[c]).collect()
        })
        .collect()
}

/// Training inputs after projection onto the selected features, in
/// canonical (id-sorted) row order.
pub(crate) struct TrainingData {
    pub rows: Vec<Vec<Value>>,
    pub terminated: Vec<bool>,
    pub weights: Vec<f64>,
    pub features: Vec<FeatureSpec>,
}

impl TrainingData {
    pub fn class_weights(&self) -> (f64, f64) {
        self.terminated
            .iter()
            .zip(&self.weights)
            .fold((0.0, 0.0), |(a, t), (&y, &w)| if y { (a, t + w) } else { (a + w, t) })
    }
}

/// Fits one classifier family. Rows are canonically re-sorted by id first,
/// so the result does not depend on input row order.
pub fn fit(
    data: &WeightedDataset,
    hp: &Hyperparameters,
    selected: &[String],
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    let ds = &data.dataset;
    ds.require_known_labels()?;
    if data.weights.len() != ds.len() || data.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(ModelError::InvalidWeights);
    }
    let (cols, specs) = resolve_features(ds, selected)?;
    hp.validate(specs.len())?;
    let (active, terminated, _) = ds.class_counts();
    if active == 0 || terminated == 0 {
        return Err(ModelError::SingleClass { active, terminated });
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| ds.rows()[a].id.cmp(&ds.rows()[b].id));
    let training = TrainingData {
        rows: project(ds, &cols, &order),
        terminated: order.iter().map(|&i| ds.rows()[i].label == Label::Terminated).collect(),
        weights: order.iter().map(|&i| data.weights[i]).collect(),
        features: specs.clone(),
    };

    let mut warnings = Vec::new();
    let state = match *hp {
        Hyperparameters::NaiveBayes { laplace_alpha } => {
            FittedState::NaiveBayes(naive_bayes::fit(&training, laplace_alpha))
        }
        Hyperparameters::Lda { ridge } => FittedState::Lda(lda::fit(&training, ridge)?),
        Hyperparameters::SvmRbf {
            cost,
            gamma,
            smo_tolerance,
            max_passes,
        } => {
            let state = svm::fit(&training, cost, gamma, smo_tolerance, max_passes);
            if !state.converged {
                warnings.push(format!(
                    "SMO stopped after {} iterations without reaching tolerance {smo_tolerance}",
                    state.iterations
                ));
            }
            FittedState::Svm(state)
        }
        Hyperparameters::Tree(params) => {
            FittedState::Tree(tree::fit_tree(&training, &training.weights, &params, None, seed, 0))
        }
        Hyperparameters::TreeBag { n_trees, tree } => FittedState::Ensemble {
            trees: tree::fit_ensemble(&training, &tree, n_trees, None, seed),
        },
        Hyperparameters::RandomForest {
            n_trees,
            mtry,
            tree,
        } => FittedState::Ensemble {
            trees: tree::fit_ensemble(&training, &tree, n_trees, Some(mtry), seed),
        },
    };
    Ok(TrainedModel {
        family: hp.family(),
        hyperparameters: *hp,
        schema_fingerprint: fingerprint(&specs),
        features: specs,
        threshold: DEFAULT_THRESHOLD,
        class_labels: [Label::Active, Label::Terminated],
        state,
        warnings,
    })
}

impl TrainedModel {
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, ModelError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ModelError::InvalidThreshold(threshold));
        }
        self.threshold = threshold;
        Ok(self)
    }

    /// Column indices of the model's features in `ds`, after checking the
    /// fingerprint.
    pub fn check_compatible(&self, ds: &Dataset) -> Result<Vec<usize>, ModelError> {
        let (cols, specs) = resolve_features(ds, &self.feature_names())?;
        let found = fingerprint(&specs);
        if found != self.schema_fingerprint {
            return Err(ModelError::FingerprintMismatch {
                expected: self.schema_fingerprint.clone(),
                found,
            });
        }
        Ok(cols)
    }

    /// Probability of Terminated for each row of `ds`.
    pub fn predict_proba(&self, ds: &Dataset) -> Result<Vec<f64>, ModelError> {
        let cols = self.check_compatible(ds)?;
        let order: Vec<usize> = (0..ds.len()).collect();
        Ok(self.score_rows(&project(ds, &cols, &order)))
    }

    /// Scores rows already projected onto the model's features.
    pub fn score_rows(&self, rows: &[Vec<Value>]) -> Vec<f64> {
        match &self.state {
            FittedState::NaiveBayes(s) => rows.iter().map(|r| s.predict(r)).collect(),
            FittedState::Lda(s) => rows.iter().map(|r| s.predict(r)).collect(),
            FittedState::Svm(s) => s.predict(rows),
            FittedState::Tree(t) => rows.iter().map(|r| t.leaf_probability(r)).collect(),
            FittedState::Ensemble { trees } => rows
                .iter()
                .map(|r| {
                    let votes = trees.iter().filter(|t| t.leaf_probability(r) >= 0.5).count();
                    votes as f64 / trees.len() as f64
                })
                .collect(),
        }
    }

    /// `Terminated` iff the probability is at least the threshold.
    pub fn predict_class(&self, ds: &Dataset) -> Result<Vec<Label>, ModelError> {
        Ok(classify(&self.predict_proba(ds)?, self.threshold))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let m: TrainedModel =
            serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        if !(m.threshold > 0.0 && m.threshold < 1.0) {
            return Err(ModelError::InvalidThreshold(m.threshold));
        }
        if fingerprint(&m.features) != m.schema_fingerprint {
            return Err(ModelError::Malformed("fingerprint does not match features".into()));
        }
        Ok(m)
    }
}

pub fn classify(probabilities: &[f64], threshold: f64) -> Vec<Label> {
    probabilities
        .iter()
        .map(|&p| if p >= threshold { Label::Terminated } else { Label::Active })
        .collect()
}
