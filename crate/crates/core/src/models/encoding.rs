use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureSpec, Value};

/// How one feature maps onto real-valued columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Encoding {
    /// Indicator per level; with `drop_first` the first level is the
    /// all-zero reference.
    OneHot { levels: usize, drop_first: bool },
    /// `(x - mean) / scale` with weighted training moments.
    Standardized { mean: f64, scale: f64 },
}

impl Encoding {
    fn width(&self) -> usize {
        match self {
            Encoding::OneHot { levels, drop_first } => levels - usize::from(*drop_first),
            Encoding::Standardized { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub parts: Vec<Encoding>,
}

impl Encoder {
    pub fn fit(features: &[FeatureSpec], rows: &[Vec<Value>], weights: &[f64], drop_first: bool) -> Self {
        let total: f64 = weights.iter().sum();
        let parts = features
            .iter()
            .enumerate()
            .map(|(c, f)| match f.kind.levels() {
                Some(levels) => Encoding::OneHot {
                    levels: levels.len(),
                    drop_first,
                },
                None => {
                    let xs = rows.iter().map(|r| r[c].number().expect("numeric"));
                    let mean = xs.clone().zip(weights).map(|(x, w)| w * x).sum::<f64>() / total;
                    let var = xs
                        .zip(weights)
                        .map(|(x, w)| w * (x - mean) * (x - mean))
                        .sum::<f64>()
                        / total;
                    let sd = var.sqrt();
                    Encoding::Standardized {
                        mean,
                        scale: if sd > 0.0 { sd } else { 1.0 },
                    }
                }
            })
            .collect();
        Encoder { parts }
    }

    pub fn width(&self) -> usize {
        self.parts.iter().map(Encoding::width).sum()
    }

    pub fn encode(&self, row: &[Value]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for (part, v) in self.parts.iter().zip(row) {
            match (part, v) {
                (Encoding::OneHot { levels, drop_first }, Value::Level(l)) => {
                    let start = usize::from(*drop_first);
                    for k in start..*levels {
                        out.push(if *l as usize == k { 1.0 } else { 0.0 });
                    }
                }
                (Encoding::Standardized { mean, scale }, Value::Number(x)) => {
                    out.push((x - mean) / scale);
                }
                _ => panic!("value kind does not match encoder"),
            }
        }
        out
    }
}
