//! Soft-margin SVM with an RBF kernel.
//!
//! The dual is solved by sequential minimal optimization with second-order
//! working-set selection. Row weights scale the box constraint,
//! `0 <= alpha_i <= cost * w_i`. Probabilities come from a Platt sigmoid
//! fitted on the training decision values.

use serde::{Deserialize, Serialize};

use super::{Encoder, TrainedModel, FittedState, TrainingData};
use crate::balance::WeightedDataset;
use crate::dataset::{Label, Value};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmState {
    pub encoder: Encoder,
    pub gamma: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coefficients: Vec<f64>,
    /// Canonical training index of each support vector.
    pub support_index: Vec<usize>,
    /// Decision value is `sum coef_i K(sv_i, x) - rho`.
    pub rho: f64,
    pub platt_a: f64,
    pub platt_b: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    converged: bool,
    iterations: usize,
}

/// Solves `min 1/2 a'Qa - e'a` s.t. `y'a = 0`, `0 <= a_i <= upper_i`, where
/// `Q_ij = y_i y_j K_ij`.
fn solve(kernel: &[f64], y: &[f64], upper: &[f64], eps: f64, max_iter: usize) -> Solution {
    let n = y.len();
    let k = |i: usize, j: usize| kernel[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: &[f64], i: usize| a[i] >= upper[i];
    let is_lower = |a: &[f64], i: usize| a[i] <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // maximal violating i
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if !is_upper(&alpha, t) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = Some(t);
                }
            } else if !is_lower(&alpha, t) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = Some(t);
            }
        }
        // second-order choice of j
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            for j in 0..n {
                let (grad_diff, in_low) = if y[j] > 0.0 {
                    if is_lower(&alpha, j) {
                        continue;
                    }
                    gmax2 = gmax2.max(grad[j]);
                    (gmax + grad[j], true)
                } else {
                    if is_upper(&alpha, j) {
                        continue;
                    }
                    gmax2 = gmax2.max(-grad[j]);
                    (gmax - grad[j], true)
                };
                if in_low && grad_diff > 0.0 {
                    let quad = k(i, i) + k(j, j) - 2.0 * y[i] * y[j] * k(i, j);
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(j);
                    }
                }
            }
        } else {
            for j in 0..n {
                if y[j] > 0.0 && !is_lower(&alpha, j) {
                    gmax2 = gmax2.max(grad[j]);
                } else if y[j] < 0.0 && !is_upper(&alpha, j) {
                    gmax2 = gmax2.max(-grad[j]);
                }
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gmax + gmax2 >= eps => (i, j),
            _ => {
                converged = true;
                break;
            }
        };
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (upper[i], upper[j]);
        let qij = y[i] * y[j] * k(i, j);
        if y[i] != y[j] {
            let quad = k(i, i) + k(j, j) + 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = k(i, i) + k(j, j) - 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[i] * y[t] * k(i, t) * di + y[j] * y[t] * k(j, t) * dj;
        }
    }

    // rho: mean of y_i G_i over free vectors, else midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(&alpha, t) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(&alpha, t) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        0.5 * (ub + lb)
    };
    Solution {
        alpha,
        rho,
        converged,
        iterations,
    }
}

/// Platt sigmoid `P(T | f) = 1 / (1 + exp(a f + b))` by Newton's method with
/// backtracking on the weighted, target-smoothed log loss.
fn platt(dec: &[f64], y: &[bool], w: &[f64]) -> (f64, f64) {
    let prior1: f64 = y.iter().zip(w).filter(|(t, _)| **t).map(|(_, w)| w).sum();
    let prior0: f64 = y.iter().zip(w).filter(|(t, _)| !**t).map(|(_, w)| w).sum();
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = y.iter().map(|&t| if t { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&targets)
            .zip(w)
            .map(|((f, t), w)| {
                let z = f * a + b;
                w * if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    (t - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, ((prior0 + 1.0) / (prior1 + 1.0)).ln());
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for ((f, t), w) in dec.iter().zip(&targets).zip(w) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += w * f * f * d2;
            h22 += w * d2;
            h21 += w * f * d2;
            let d1 = t - p;
            g1 += w * f * d1;
            g2 += w * d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    (a, b)
}

pub(super) fn fit(data: &TrainingData, cost: f64, gamma: f64, tolerance: f64, max_passes: usize) -> SvmState {
    let encoder = Encoder::fit(&data.features, &data.rows, &data.weights, false);
    let x: Vec<Vec<f64>> = data.rows.iter().map(|r| encoder.encode(r)).collect();
    let n = x.len();
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        kernel[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = rbf(gamma, &x[i], &x[j]);
            kernel[i * n + j] = v;
            kernel[j * n + i] = v;
        }
    }
    let y: Vec<f64> = data.terminated.iter().map(|&t| if t { 1.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = data.weights.iter().map(|w| cost * w).collect();
    let sol = solve(&kernel, &y, &upper, tolerance, max_passes.saturating_mul(n.max(1)));

    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    let mut support_index = Vec::new();
    for i in 0..n {
        if sol.alpha[i] > 0.0 {
            support_vectors.push(x[i].clone());
            dual_coefficients.push(sol.alpha[i] * y[i]);
            support_index.push(i);
        }
    }
    let decision: Vec<f64> = (0..n)
        .map(|i| {
            support_index
                .iter()
                .zip(&dual_coefficients)
                .map(|(&s, c)| c * kernel[s * n + i])
                .sum::<f64>()
                - sol.rho
        })
        .collect();
    let (platt_a, platt_b) = platt(&decision, &data.terminated, &data.weights);
    SvmState {
        encoder,
        gamma,
        support_vectors,
        dual_coefficients,
        support_index,
        rho: sol.rho,
        platt_a,
        platt_b,
        converged: sol.converged,
        iterations: sol.iterations,
    }
}

impl SvmState {
    pub fn decision_values(&self, rows: &[Vec<Value>]) -> Vec<f64> {
        rows.iter()
            .map(|r| {
                let x = self.encoder.encode(r);
                self.support_vectors
                    .iter()
                    .zip(&self.dual_coefficients)
                    .map(|(sv, c)| c * rbf(self.gamma, sv, &x))
                    .sum::<f64>()
                    - self.rho
            })
            .collect()
    }

    pub fn predict(&self, rows: &[Vec<Value>]) -> Vec<f64> {
        self.decision_values(rows)
            .into_iter()
            .map(|f| {
                let z = f * self.platt_a + self.platt_b;
                if z >= 0.0 {
                    let e = (-z).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + z.exp())
                }
            })
            .collect()
    }
}

/// KKT violation of each training row of an SVM model, in canonical (id)
/// order, recomputed from the stored dual solution:
/// `alpha = 0` needs `y f >= 1`, `alpha = C_i` needs `y f <= 1`, and free
/// vectors need `y f = 1`. Returns `None` for non-SVM models.
pub fn kkt_violations(model: &TrainedModel, training: &WeightedDataset) -> Option<Vec<f64>> {
    let FittedState::Svm(state) = &model.state else {
        return None;
    };
    let cost = match model.hyperparameters {
        super::Hyperparameters::SvmRbf { cost, .. } => cost,
        _ => return None,
    };
    let ds = &training.dataset;
    let cols = model.check_compatible(ds).ok()?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| ds.rows()[a].id.cmp(&ds.rows()[b].id));
    let rows: Vec<Vec<Value>> = order
        .iter()
        .map(|&i| cols.iter().map(|&c| ds.rows()[i].values[c]).collect())
        .collect();
    let decision = state.decision_values(&rows);
    let mut alpha = vec![0.0; rows.len()];
    for (&s, c) in state.support_index.iter().zip(&state.dual_coefficients) {
        alpha[s] = c.abs();
    }
    Some(
        order
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let y = if ds.rows()[i].label == Label::Terminated { 1.0 } else { -1.0 };
                let margin = y * decision[k];
                let upper = cost * training.weights[i];
                if alpha[k] <= 0.0 {
                    (1.0 - margin).max(0.0)
                } else if alpha[k] >= upper {
                    (margin - 1.0).max(0.0)
                } else {
                    (margin - 1.0).abs()
                }
            })
            .collect(),
    )
}
