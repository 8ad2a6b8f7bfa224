use serde::{Deserialize, Serialize};

use super::TrainingData;
use crate::dataset::Value;

/// Per-feature class-conditional model. Index 0 is Active, 1 is Terminated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Conditional {
    /// `probabilities[level][class]`, Laplace-smoothed weighted frequencies.
    Levels { probabilities: Vec<[f64; 2]> },
    Gaussian { mean: [f64; 2], variance: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesState {
    pub prior: [f64; 2],
    pub conditionals: Vec<Conditional>,
}

pub(super) fn fit(data: &TrainingData, alpha: f64) -> NaiveBayesState {
    let (w_active, w_terminated) = data.class_weights();
    let class_total = [w_active, w_terminated];
    let total = w_active + w_terminated;
    let prior = [w_active / total, w_terminated / total];

    let numeric_var = |c: usize| {
        let mean = data.rows.iter().zip(&data.weights).map(|(r, w)| w * r[c].number().unwrap()).sum::<f64>() / total;
        data.rows
            .iter()
            .zip(&data.weights)
            .map(|(r, w)| {
                let d = r[c].number().unwrap() - mean;
                w * d * d
            })
            .sum::<f64>()
            / total
    };
    let max_var = (0..data.features.len())
        .filter(|&c| data.features[c].kind.is_numeric())
        .map(numeric_var)
        .fold(0.0, f64::max);
    let epsilon = 1e-9 * if max_var > 0.0 { max_var } else { 1.0 };

    let conditionals = data
        .features
        .iter()
        .enumerate()
        .map(|(c, spec)| match spec.kind.levels() {
            Some(levels) => {
                let mut counts = vec![[0.0f64; 2]; levels.len()];
                for ((r, &y), &w) in data.rows.iter().zip(&data.terminated).zip(&data.weights) {
                    counts[r[c].level().unwrap()][usize::from(y)] += w;
                }
                let l = levels.len() as f64;
                let probabilities = counts
                    .iter()
                    .map(|cell| {
                        [
                            (cell[0] + alpha) / (class_total[0] + alpha * l),
                            (cell[1] + alpha) / (class_total[1] + alpha * l),
                        ]
                    })
                    .collect();
                Conditional::Levels { probabilities }
            }
            None => {
                let mut sum = [0.0f64; 2];
                for ((r, &y), &w) in data.rows.iter().zip(&data.terminated).zip(&data.weights) {
                    sum[usize::from(y)] += w * r[c].number().unwrap();
                }
                let mean = [sum[0] / class_total[0], sum[1] / class_total[1]];
                let mut ss = [0.0f64; 2];
                for ((r, &y), &w) in data.rows.iter().zip(&data.terminated).zip(&data.weights) {
                    let k = usize::from(y);
                    let d = r[c].number().unwrap() - mean[k];
                    ss[k] += w * d * d;
                }
                Conditional::Gaussian {
                    mean,
                    variance: [ss[0] / class_total[0] + epsilon, ss[1] / class_total[1] + epsilon],
                }
            }
        })
        .collect();
    NaiveBayesState {
        prior,
        conditionals,
    }
}

fn gaussian_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

impl NaiveBayesState {
    /// Posterior probability of Terminated.
    pub fn predict(&self, row: &[Value]) -> f64 {
        let mut log = [self.prior[0].ln(), self.prior[1].ln()];
        for (cond, v) in self.conditionals.iter().zip(row) {
            match (cond, v) {
                (Conditional::Levels { probabilities }, Value::Level(l)) => {
                    let p = probabilities[*l as usize];
                    // a level never seen in training carries no evidence
                    if p[0] == 0.0 && p[1] == 0.0 {
                        continue;
                    }
                    log[0] += p[0].ln();
                    log[1] += p[1].ln();
                }
                (Conditional::Gaussian { mean, variance }, Value::Number(x)) => {
                    log[0] += gaussian_log_density(*x, mean[0], variance[0]);
                    log[1] += gaussian_log_density(*x, mean[1], variance[1]);
                }
                _ => panic!("value kind does not match naive Bayes conditional"),
            }
        }
        if log[0] == f64::NEG_INFINITY && log[1] == f64::NEG_INFINITY {
            return self.prior[1];
        }
        1.0 / (1.0 + (log[0] - log[1]).exp())
    }
}
