use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Encoder, ModelError, TrainingData};
use crate::dataset::Value;

/// Two-class linear discriminant: `P(Terminated | x) = sigmoid(b + beta . x)`
/// with `beta = S^-1 (mu_T - mu_A)` over the encoded features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaState {
    pub encoder: Encoder,
    pub class_means: [Vec<f64>; 2],
    pub prior: [f64; 2],
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

/// Relative pivot size below which the pooled covariance counts as singular.
const SINGULAR_PIVOT: f64 = 1e-12;

pub(super) fn fit(data: &TrainingData, ridge: f64) -> Result<LdaState, ModelError> {
    let encoder = Encoder::fit(&data.features, &data.rows, &data.weights, true);
    let x: Vec<Vec<f64>> = data.rows.iter().map(|r| encoder.encode(r)).collect();
    let d = encoder.width();

    let (w_active, w_terminated) = data.class_weights();
    let class_total = [w_active, w_terminated];
    let mut means = [vec![0.0; d], vec![0.0; d]];
    for ((row, &y), &w) in x.iter().zip(&data.terminated).zip(&data.weights) {
        let m = &mut means[usize::from(y)];
        for (acc, v) in m.iter_mut().zip(row) {
            *acc += w * v;
        }
    }
    for (m, t) in means.iter_mut().zip(class_total) {
        m.iter_mut().for_each(|v| *v /= t);
    }

    let total = w_active + w_terminated;
    let denom = if total > 2.0 { total - 2.0 } else { total };
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for ((row, &y), &w) in x.iter().zip(&data.terminated).zip(&data.weights) {
        let m = &means[usize::from(y)];
        for k in 0..d {
            centered[k] = row[k] - m[k];
        }
        for a in 0..d {
            let ca = w * centered[a];
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
        cov[(a, a)] += ridge;
    }

    let scale = (0..d).map(|a| cov[(a, a)]).fold(0.0, f64::max);
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(ModelError::SingularCovariance { ridge })?;
    let l = chol.l_dirty();
    if (0..d).any(|a| l[(a, a)] * l[(a, a)] <= SINGULAR_PIVOT * scale) {
        return Err(ModelError::SingularCovariance { ridge });
    }
    let diff = DVector::from_iterator(d, means[1].iter().zip(&means[0]).map(|(t, a)| t - a));
    let beta = chol.solve(&diff);
    let prior = [w_active / total, w_terminated / total];
    let midpoint: f64 = (0..d).map(|k| 0.5 * (means[1][k] + means[0][k]) * beta[k]).sum();
    let intercept = -midpoint + (prior[1] / prior[0]).ln();
    Ok(LdaState {
        encoder,
        class_means: means,
        prior,
        coefficients: beta.iter().copied().collect(),
        intercept,
    })
}

impl LdaState {
    pub fn discriminant(&self, row: &[Value]) -> f64 {
        let x = self.encoder.encode(row);
        self.intercept + x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Posterior probability of Terminated.
    pub fn predict(&self, row: &[Value]) -> f64 {
        1.0 / (1.0 + (-self.discriminant(row)).exp())
    }
}
