use serde::{Deserialize, Serialize};

use super::{evaluate, train_restarts, NoopObserver, TrainConfig, TrainOptions};
use crate::error::{DelError, Result};
use crate::measure::{Dataset, Label};
use crate::metrics::Metrics;
use crate::numerics::RngStream;
use crate::rule_dsl::RuleSet;
use crate::synth::br_classify;

/// Seeded 50/50 split, stratified by label. Returns `(first, second)`
/// index lists; the first half gets the extra sample of odd classes.
pub fn stratified_split(dataset: &Dataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let rng = RngStream::new(seed);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (key, label) in [(0u64, Label::Positive), (1, Label::Negative)] {
        let mut idx = dataset.indices_of(label);
        rng.split(key).shuffle(&mut idx);
        let half = idx.len().div_ceil(2);
        a.extend_from_slice(&idx[..half]);
        b.extend_from_slice(&idx[half..]);
    }
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub train: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTable {
    pub title: String,
    /// Rows in fixed order: DEL, then BR.
    pub rows: Vec<MethodRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub tables: Vec<ProtocolTable>,
}

/// A dataset with its name and accuracy gate.
#[derive(Debug, Clone, Copy)]
pub struct NamedDataset<'a> {
    pub name: &'a str,
    pub data: &'a Dataset,
    pub acc_threshold: f64,
}

fn run_pair(
    title: String,
    train_set: NamedDataset<'_>,
    test_set: NamedDataset<'_>,
    rules: &RuleSet,
    config: &TrainConfig,
    restarts: usize,
) -> Result<ProtocolTable> {
    let cfg = TrainConfig {
        acc_threshold: train_set.acc_threshold,
        ..config.clone()
    };
    let (outcomes, best) = train_restarts(
        &cfg,
        train_set.data,
        rules,
        restarts,
        &TrainOptions::default(),
        &mut NoopObserver,
    )?;
    let snap = best
        .and_then(|r| outcomes[r].best_snapshot())
        .ok_or_else(|| DelError::Config("training produced no validation snapshot".into()))?;
    let del = MethodRow {
        method: "DEL".into(),
        train: evaluate(snap, train_set.data, train_set.acc_threshold)?,
        test: evaluate(snap, test_set.data, test_set.acc_threshold)?,
    };
    let br = MethodRow {
        method: "BR".into(),
        train: br_classify(rules, train_set.data, train_set.acc_threshold)?,
        test: br_classify(rules, test_set.data, test_set.acc_threshold)?,
    };
    Ok(ProtocolTable {
        title,
        rows: vec![del, br],
    })
}

/// Closed tests on each dataset (seeded stratified halves) and open tests
/// in both directions (train on all of one, test on all of the other).
pub fn closed_open_protocol(
    a: NamedDataset<'_>,
    b: NamedDataset<'_>,
    rules: &RuleSet,
    config: &TrainConfig,
    restarts: usize,
) -> Result<ProtocolReport> {
    let mut tables = Vec::with_capacity(4);
    for d in [a, b] {
        let (tr, te) = stratified_split(d.data, config.seed);
        let (tr_ds, te_ds) = (d.data.subset(&tr), d.data.subset(&te));
        tables.push(run_pair(
            format!("closed test on {}", d.name),
            NamedDataset { data: &tr_ds, ..d },
            NamedDataset { data: &te_ds, ..d },
            rules,
            config,
            restarts,
        )?);
    }
    for (x, y) in [(a, b), (b, a)] {
        tables.push(run_pair(
            format!("open test {} -> {}", x.name, y.name),
            x,
            y,
            rules,
            config,
            restarts,
        )?);
    }
    Ok(ProtocolReport { tables })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Column, ColumnKind, Sample, Schema};

    fn toy(pos: usize, neg: usize) -> Dataset {
        let schema = Schema::new(
            vec![Column {
                name: "position".into(),
                kind: ColumnKind::Numeric,
            }],
            0,
        )
        .unwrap();
        let s = |y| Sample {
            x_seq: vec![],
            x_base: vec![],
            y,
            y_feat: vec![],
        };
        let samples = (0..pos)
            .map(|_| s(Label::Positive))
            .chain((0..neg).map(|_| s(Label::Negative)))
            .collect();
        Dataset::new(schema, samples).unwrap()
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let d = toy(7, 30);
        let (a, b) = stratified_split(&d, 3);
        assert_eq!(a.len() + b.len(), 37);
        let pa = a.iter().filter(|&&i| d.samples[i].y == Label::Positive).count();
        let pb = b.iter().filter(|&&i| d.samples[i].y == Label::Positive).count();
        assert!(pa.abs_diff(pb) <= 1);
        assert!(a.iter().all(|i| !b.contains(i)));
        assert_eq!(stratified_split(&d, 3), (a, b));
    }
}
