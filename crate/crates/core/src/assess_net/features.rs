use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::measure::{ColumnKind, Sample, Schema, Value};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    Standardize { mean: f64, std: f64 },
    OneHot { categories: Vec<String> },
}

/// Preprocessing statistics fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub columns: Vec<ColumnEncoding>,
    pub base_mean: Vec<f64>,
    pub base_std: Vec<f64>,
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        sum += v;
        sq += v * v;
    }
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

impl FeatureSpec {
    /// Numeric columns standardized, categorical columns one-hot over the
    /// categories seen in `samples` (sorted). Base entries standardized.
    pub fn fit<'a>(schema: &Schema, samples: impl IntoIterator<Item = &'a Sample> + Clone) -> Self {
        let columns = schema
            .columns
            .iter()
            .enumerate()
            .map(|(c, col)| match col.kind {
                ColumnKind::Numeric => {
                    let (mean, std) = mean_std(
                        samples
                            .clone()
                            .into_iter()
                            .flat_map(|s| s.x_seq.iter().filter_map(move |r| r[c].as_num())),
                    );
                    ColumnEncoding::Standardize { mean, std }
                }
                ColumnKind::Categorical => {
                    let cats: BTreeSet<String> = samples
                        .clone()
                        .into_iter()
                        .flat_map(|s| {
                            s.x_seq
                                .iter()
                                .filter_map(move |r| r[c].as_cat().map(str::to_string))
                        })
                        .collect();
                    ColumnEncoding::OneHot {
                        categories: cats.into_iter().collect(),
                    }
                }
            })
            .collect();
        let (base_mean, base_std) = (0..schema.base_len)
            .map(|b| mean_std(samples.clone().into_iter().map(|s| s.x_base[b])))
            .unzip();
        Self {
            columns,
            base_mean,
            base_std,
        }
    }

    pub fn width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                ColumnEncoding::Standardize { .. } => 1,
                ColumnEncoding::OneHot { categories } => categories.len(),
            })
            .sum()
    }

    pub fn base_len(&self) -> usize {
        self.base_mean.len()
    }

    /// Row features, `n x width`. Unseen categories encode as all zeros.
    pub fn encode_rows(&self, sample: &Sample) -> Matrix {
        let w = self.width();
        let mut m = Matrix::zeros(sample.len(), w);
        for (r, row) in sample.x_seq.iter().enumerate() {
            let out = m.row_mut(r);
            let mut off = 0;
            for (enc, v) in self.columns.iter().zip(row) {
                match (enc, v) {
                    (ColumnEncoding::Standardize { mean, std }, Value::Num(x)) => {
                        out[off] = (x - mean) / std;
                        off += 1;
                    }
                    (ColumnEncoding::Standardize { .. }, _) => off += 1,
                    (ColumnEncoding::OneHot { categories }, Value::Cat(s)) => {
                        if let Ok(i) = categories.binary_search(s) {
                            out[off + i] = 1.0;
                        }
                        off += categories.len();
                    }
                    (ColumnEncoding::OneHot { categories }, _) => off += categories.len(),
                }
            }
        }
        m
    }

    pub fn encode_base(&self, sample: &Sample) -> Vec<f64> {
        sample
            .x_base
            .iter()
            .zip(self.base_mean.iter().zip(&self.base_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Column, Label};

    #[test]
    fn standardizes_and_one_hot_encodes() {
        let schema = Schema::new(
            vec![
                Column {
                    name: "position".into(),
                    kind: ColumnKind::Numeric,
                },
                Column {
                    name: "type".into(),
                    kind: ColumnKind::Categorical,
                },
            ],
            1,
        )
        .unwrap();
        let s = Sample {
            x_seq: vec![
                vec![Value::Num(0.0), Value::Cat("b".into())],
                vec![Value::Num(2.0), Value::Cat("a".into())],
            ],
            x_base: vec![5.0],
            y: Label::Negative,
            y_feat: vec![],
        };
        let spec = FeatureSpec::fit(&schema, [&s]);
        assert_eq!(spec.width(), 3);
        let m = spec.encode_rows(&s);
        assert_eq!(m.row(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(m.row(1), &[1.0, 1.0, 0.0]);
        assert_eq!(spec.encode_base(&s), vec![0.0]);
    }
}
