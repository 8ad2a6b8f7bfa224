use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TrainingData, TreeParams};
use crate::dataset::{FeatureKind, Value};
use crate::seeding::{rng_indexed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Split {
    /// Numbers and band indices `<= threshold` go left.
    Threshold { feature: usize, threshold: f64 },
    /// Categorical levels with `left[level]` go left; others go right.
    Levels { feature: usize, left: Vec<bool> },
}

impl Split {
    fn goes_left(&self, row: &[Value]) -> bool {
        match self {
            Split::Threshold { feature, threshold } => {
                let x = match row[*feature] {
                    Value::Number(x) => x,
                    Value::Level(l) => f64::from(l),
                };
                x <= *threshold
            }
            Split::Levels { feature, left } => {
                let l = row[*feature].level().expect("categorical value");
                left.get(l).copied().unwrap_or(false)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { p_terminated: f64, weight: f64 },
    Internal { split: Split, left: usize, right: usize },
}

/// Binary CART tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
}

impl TreeModel {
    /// Terminated share of training weight in the leaf `row` lands in.
    pub fn leaf_probability(&self, row: &[Value]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Leaf { p_terminated, .. } => return *p_terminated,
                TreeNode::Internal { split, left, right } => {
                    k = if split.goes_left(row) { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], k: usize) -> usize {
            match &nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Multiplicity of each of `n` rows in the `index`-th bootstrap sample.
pub fn bootstrap_counts(n: usize, seed: u64, index: u64) -> Vec<u32> {
    let mut rng = rng_indexed(seed, Stream::Bootstrap, index);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

/// Weighted Gini impurity times node weight.
fn impurity(w: f64, wt: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let p = wt / w;
    w * 2.0 * p * (1.0 - p)
}

struct Candidate {
    gain: f64,
    split: Split,
}

struct Builder<'a> {
    data: &'a TrainingData,
    weights: &'a [f64],
    params: &'a TreeParams,
    mtry: Option<usize>,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn totals(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(w, wt), &i| {
            let wi = self.weights[i];
            (w + wi, if self.data.terminated[i] { wt + wi } else { wt })
        })
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let (w, wt) = self.totals(&idx);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            p_terminated: wt / w,
            weight: w,
        });
        let pure = wt <= 0.0 || wt >= w;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || w < 2.0 * self.params.min_leaf {
            return slot;
        }
        let Some(best) = self.best_split(&idx, w, wt) else {
            return slot;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| best.split.goes_left(&self.data.rows[i]));
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[slot] = TreeNode::Internal {
            split: best.split,
            left,
            right,
        };
        slot
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.data.features.len();
        match self.mtry {
            Some(m) if m < p => {
                let mut f = sample(&mut self.rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, idx: &[usize], w: f64, wt: f64) -> Option<Candidate> {
        let parent = impurity(w, wt);
        let tol = 1e-12 * w;
        let mut best: Option<Candidate> = None;
        for f in self.candidate_features() {
            let mut consider = |gain: f64, split: Split| {
                if best.as_ref().is_none_or(|b| gain > b.gain + tol) {
                    best = Some(Candidate { gain, split });
                }
            };
            match &self.data.features[f].kind {
                FeatureKind::Categorical { levels } => {
                    let mut cell = vec![(0.0f64, 0.0f64); levels.len()];
                    for &i in idx {
                        let l = self.data.rows[i][f].level().expect("level");
                        cell[l].0 += self.weights[i];
                        if self.data.terminated[i] {
                            cell[l].1 += self.weights[i];
                        }
                    }
                    let mut present: Vec<usize> = (0..levels.len()).filter(|&l| cell[l].0 > 0.0).collect();
                    // Breiman ordering: for two classes the best subset split is a prefix
                    present.sort_by(|&a, &b| {
                        let pa = cell[a].1 / cell[a].0;
                        let pb = cell[b].1 / cell[b].0;
                        pa.total_cmp(&pb).then(a.cmp(&b))
                    });
                    let (mut lw, mut lt) = (0.0, 0.0);
                    for k in 0..present.len().saturating_sub(1) {
                        lw += cell[present[k]].0;
                        lt += cell[present[k]].1;
                        let (rw, rt) = (w - lw, wt - lt);
                        if lw < self.params.min_leaf || rw < self.params.min_leaf {
                            continue;
                        }
                        let gain = parent - impurity(lw, lt) - impurity(rw, rt);
                        let mut left = vec![false; levels.len()];
                        for &l in &present[..=k] {
                            left[l] = true;
                        }
                        consider(gain, Split::Levels { feature: f, left });
                    }
                }
                _ => {
                    let key = |v: Value| match v {
                        Value::Number(x) => x,
                        Value::Level(l) => f64::from(l),
                    };
                    let mut sorted: Vec<(f64, f64, bool)> = idx
                        .iter()
                        .map(|&i| (key(self.data.rows[i][f]), self.weights[i], self.data.terminated[i]))
                        .collect();
                    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let (mut lw, mut lt) = (0.0, 0.0);
                    for k in 0..sorted.len() - 1 {
                        lw += sorted[k].1;
                        if sorted[k].2 {
                            lt += sorted[k].1;
                        }
                        if sorted[k].0 == sorted[k + 1].0 {
                            continue;
                        }
                        let (rw, rt) = (w - lw, wt - lt);
                        if lw < self.params.min_leaf || rw < self.params.min_leaf {
                            continue;
                        }
                        let gain = parent - impurity(lw, lt) - impurity(rw, rt);
                        let threshold = 0.5 * (sorted[k].0 + sorted[k + 1].0);
                        consider(gain, Split::Threshold { feature: f, threshold });
                    }
                }
            }
        }
        best
    }
}

/// Grows one tree on the rows with positive weight. With `mtry`, each node
/// considers a fresh random feature subset of that size.
pub(super) fn fit_tree(
    data: &TrainingData,
    weights: &[f64],
    params: &TreeParams,
    mtry: Option<usize>,
    seed: u64,
    tree_index: u64,
) -> TreeModel {
    let idx: Vec<usize> = (0..data.rows.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut builder = Builder {
        data,
        weights,
        params,
        mtry,
        rng: rng_indexed(seed, Stream::FeatureSampling, tree_index),
        nodes: Vec::new(),
    };
    builder.build(idx, 0);
    TreeModel { nodes: builder.nodes }
}

/// Bagged trees: tree `i` is grown on bootstrap sample `i`, with row weights
/// multiplied by bootstrap multiplicity.
pub(super) fn fit_ensemble(
    data: &TrainingData,
    params: &TreeParams,
    n_trees: usize,
    mtry: Option<usize>,
    seed: u64,
) -> Vec<TreeModel> {
    let n = data.rows.len();
    (0..n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let counts = bootstrap_counts(n, seed, t);
            let weights: Vec<f64> = counts
                .iter()
                .zip(&data.weights)
                .map(|(&c, &w)| f64::from(c) * w)
                .collect();
            fit_tree(data, &weights, params, mtry, seed, t)
        })
        .collect()
}
