use rayon::prelude::*;

use crate::error::Result;
use crate::measure::{Dataset, Label, MaskedSample, MeasureSet, Sample};
use crate::metrics::{intersects, Confusion, Metrics};
use crate::rule_dsl::{classify_boolean, RuleSet};

/// Crisp prediction with the rule file's own thresholds on the raw sample,
/// plus the rows touched by the violated leaves.
pub fn br_predict(rules: &RuleSet, measures: &MeasureSet, sample: &Sample) -> Result<(Label, Vec<usize>)> {
    let (f, touched) = measures.evaluate_all(MaskedSample::unmasked(sample))?;
    let out = classify_boolean(rules, &rules.theta, &f);
    let leaves = rules.leaves();
    let mut rows: Vec<usize> = out
        .violated
        .iter()
        .flat_map(|&l| touched[leaves[l].measurement].iter().copied())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    Ok((out.label, rows))
}

/// Metrics of the raw-rule baseline on `dataset`.
pub fn br_classify(rules: &RuleSet, dataset: &Dataset, acc_threshold: f64) -> Result<Metrics> {
    let measures = MeasureSet::for_rules(rules, &dataset.schema)?;
    let preds: Vec<(Label, Vec<usize>)> = dataset
        .samples
        .par_iter()
        .map(|s| br_predict(rules, &measures, s))
        .collect::<Result<_>>()?;
    let mut c = Confusion::default();
    let (mut hits, mut labeled) = (0, 0);
    for (s, (label, rows)) in dataset.samples.iter().zip(&preds) {
        c.record(*label, s.y);
        if !s.y_feat.is_empty() {
            labeled += 1;
            let mut feat = s.y_feat.clone();
            feat.sort_unstable();
            if intersects(rows, &feat) {
                hits += 1;
            }
        }
    }
    Ok(Metrics::from_confusion(c, (hits, labeled), acc_threshold))
}
