use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{DelError, Result};

/// Longest observation sequence accepted (exclusive bound).
pub const MAX_SEQ_LEN: usize = 20_000;

/// Name of the mandatory numeric column carrying each row's location.
pub const POSITION_COLUMN: &str = "position";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

fn default_distance_threshold() -> f64 {
    2.0
}

/// Layout of a dataset: sequence columns plus the base-vector length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
    pub base_len: usize,
    /// Value reported by `max` over an empty row set.
    #[serde(default)]
    pub empty_max_default: f64,
    /// Rows closer than this (in position units) are linked in the row graph.
    #[serde(default = "default_distance_threshold")]
    pub distance_threshold: f64,
}

impl Schema {
    pub fn new(columns: Vec<Column>, base_len: usize) -> Result<Self> {
        let s = Self {
            columns,
            base_len,
            empty_max_default: 0.0,
            distance_threshold: default_distance_threshold(),
        };
        s.check()?;
        Ok(s)
    }

    /// Structural checks: unique names, numeric `position` column present.
    pub fn check(&self) -> Result<()> {
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|o| o.name == c.name) {
                return Err(DelError::Schema(format!("duplicate column {:?}", c.name)));
            }
        }
        match self.column(POSITION_COLUMN) {
            Some((_, ColumnKind::Numeric)) => {}
            Some(_) => {
                return Err(DelError::Schema(
                    "column \"position\" must be numeric".into(),
                ))
            }
            None => {
                return Err(DelError::Schema(
                    "schema lacks the mandatory \"position\" column".into(),
                ))
            }
        }
        if !self.empty_max_default.is_finite() || self.distance_threshold.is_nan() || self.distance_threshold < 0.0 {
            return Err(DelError::Schema(
                "empty_max_default must be finite and distance_threshold nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<(usize, ColumnKind)> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .map(|i| (i, self.columns[i].kind))
    }

    pub fn position_index(&self) -> usize {
        self.column(POSITION_COLUMN)
            .map(|(i, _)| i)
            .expect("checked schema has a position column")
    }

    pub fn validate_sample(&self, s: &Sample) -> Result<()> {
        if s.x_seq.len() >= MAX_SEQ_LEN {
            return Err(DelError::Schema(format!(
                "sequence of {} rows exceeds the {MAX_SEQ_LEN} limit",
                s.x_seq.len()
            )));
        }
        if s.x_base.len() != self.base_len {
            return Err(DelError::Schema(format!(
                "base vector has {} entries, schema expects {}",
                s.x_base.len(),
                self.base_len
            )));
        }
        if let Some(v) = s.x_base.iter().find(|v| !v.is_finite()) {
            return Err(DelError::Schema(format!("non-finite base value {v}")));
        }
        for (r, row) in s.x_seq.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(DelError::Schema(format!(
                    "row {r} has {} values, schema has {} columns",
                    row.len(),
                    self.columns.len()
                )));
            }
            for (v, c) in row.iter().zip(&self.columns) {
                match (v, c.kind) {
                    (Value::Num(x), ColumnKind::Numeric) if x.is_finite() => {}
                    (Value::Cat(_), ColumnKind::Categorical) => {}
                    _ => {
                        return Err(DelError::Schema(format!(
                            "row {r}: value {v} does not fit column {:?}",
                            c.name
                        )))
                    }
                }
            }
        }
        if let Some(&i) = s.y_feat.iter().find(|&&i| i >= s.x_seq.len()) {
            return Err(DelError::Schema(format!(
                "critical row {i} out of range for {} rows",
                s.x_seq.len()
            )));
        }
        Ok(())
    }
}

/// One cell of an observation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Cat(s) => write!(f, "{s:?}"),
        }
    }
}

/// Binary class label. `Positive` (+1) marks an unqualified sample that
/// fails the rules; `Negative` (-1) a qualified one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Self {
        if v > 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.sign() as i8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match i64::deserialize(d)? {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(serde::de::Error::custom(format!(
                "label must be 1 or -1, got {other}"
            ))),
        }
    }
}

/// One product record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x_seq: Vec<Vec<Value>>,
    pub x_base: Vec<f64>,
    pub y: Label,
    #[serde(default)]
    pub y_feat: Vec<usize>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.x_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_seq.is_empty()
    }

    /// Copy containing only the rows kept by `keep`, with `y_feat`
    /// re-indexed into the filtered sequence.
    pub fn filtered(&self, keep: &[bool]) -> Sample {
        let mut remap = vec![usize::MAX; self.x_seq.len()];
        let mut x_seq = Vec::new();
        for (i, row) in self.x_seq.iter().enumerate() {
            if keep[i] {
                remap[i] = x_seq.len();
                x_seq.push(row.clone());
            }
        }
        Sample {
            x_seq,
            x_base: self.x_base.clone(),
            y: self.y,
            y_feat: self
                .y_feat
                .iter()
                .filter(|&&i| keep[i])
                .map(|&i| remap[i])
                .collect(),
        }
    }
}

/// Rows with mask value at least 0.5 survive; the rest are dropped.
pub fn keep_rows(mask: &[f64]) -> Vec<bool> {
    mask.iter().map(|&m| m >= 0.5).collect()
}

/// A sample together with a per-row soft mask.
#[derive(Debug, Clone, Copy)]
pub struct MaskedSample<'a> {
    pub sample: &'a Sample,
    pub mask: Option<&'a [f64]>,
}

impl<'a> MaskedSample<'a> {
    pub fn unmasked(sample: &'a Sample) -> Self {
        Self { sample, mask: None }
    }

    pub fn new(sample: &'a Sample, mask: &'a [f64]) -> Result<Self> {
        if mask.len() != sample.len() {
            return Err(DelError::Shape(format!(
                "mask has {} entries for {} rows",
                mask.len(),
                sample.len()
            )));
        }
        Ok(Self {
            sample,
            mask: Some(mask),
        })
    }

    #[inline]
    pub fn is_kept(&self, row: usize) -> bool {
        self.mask.is_none_or(|m| m[row] >= 0.5)
    }
}

/// An ordered collection of samples sharing a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(schema: Schema, samples: Vec<Sample>) -> Result<Self> {
        schema.check()?;
        for (i, s) in samples.iter().enumerate() {
            schema
                .validate_sample(s)
                .map_err(|e| DelError::Schema(format!("sample {i}: {e}")))?;
        }
        Ok(Self { schema, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.y == label).count()
    }

    pub fn indices_of(&self, label: Label) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].y == label)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(
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
        .unwrap()
    }

    #[test]
    fn position_column_is_mandatory() {
        let cols = vec![Column {
            name: "type".into(),
            kind: ColumnKind::Categorical,
        }];
        assert!(Schema::new(cols, 0).is_err());
    }

    #[test]
    fn sample_validation_catches_bad_rows() {
        let s = schema();
        let mut sample = Sample {
            x_seq: vec![vec![Value::Num(0.0), Value::Cat("a".into())]],
            x_base: vec![1.0],
            y: Label::Negative,
            y_feat: vec![0],
        };
        s.validate_sample(&sample).unwrap();
        sample.y_feat = vec![1];
        assert!(s.validate_sample(&sample).is_err());
        sample.y_feat.clear();
        sample.x_seq[0][1] = Value::Num(2.0);
        assert!(s.validate_sample(&sample).is_err());
    }

    #[test]
    fn label_serializes_as_sign() {
        assert_eq!(serde_json::to_string(&Label::Positive).unwrap(), "1");
        let l: Label = serde_json::from_str("-1").unwrap();
        assert_eq!(l, Label::Negative);
        assert!(serde_json::from_str::<Label>("0").is_err());
    }

    #[test]
    fn half_is_kept() {
        assert_eq!(keep_rows(&[0.49, 0.5, 0.9]), vec![false, true, true]);
    }
}
