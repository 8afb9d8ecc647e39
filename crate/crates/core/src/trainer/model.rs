use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assess_net::{sample_graph, AssessInput, AssessWeights, FeatureSpec, RowGraph};
use crate::error::{DelError, Result};
use crate::measure::{keep_rows, Dataset, Label, MeasureSet, Sample, SampleIndex, Schema};
use crate::metrics::{intersects, Confusion, Metrics};
use crate::rule_dsl::{classify_boolean, RuleSet};
use crate::rule_net::{CompiledRuleNet, RuleNetConfig, RuleNetState};

/// Weights and preprocessing of a trained assessing network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessSnapshot {
    pub weights: AssessWeights,
    pub features: FeatureSpec,
}

/// Everything needed to reproduce predictions at one validation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub rules: RuleSet,
    pub rule_net: RuleNetState,
    pub rule_config: RuleNetConfig,
    pub assess: Option<AssessSnapshot>,
    /// Whether predictions apply the assessing model's masks.
    pub masks_active: bool,
    pub acc_threshold: f64,
    pub metrics: Metrics,
    pub loss_rule: f64,
    pub loss_assess: f64,
    pub config_hash: String,
}

impl Snapshot {
    pub fn file_name(step: usize) -> String {
        format!("snap_{step}.json")
    }

    /// Writes `snap_{step}.json` into `dir` via a temporary file and rename.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(self.step));
        write_atomic(&path, &serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DelError::Snapshot(format!("{}: {e}", path.display())))
    }

    /// Rule set carrying the learned thresholds.
    pub fn learned_rules(&self) -> RuleSet {
        RuleSet {
            theta: self.rule_net.theta.clone(),
            frozen: self.rule_net.frozen.clone(),
            ..self.rules.clone()
        }
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| DelError::Io(e.error))?;
    Ok(())
}

/// Per-sample data that does not change during training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub index: SampleIndex,
    pub graph: RowGraph,
    pub input: Option<AssessInput>,
}

/// Indexes every sample; encodes assess inputs when `features` is given.
pub fn prepare(dataset: &Dataset, measures: &MeasureSet, features: Option<&FeatureSpec>) -> Result<Vec<Prepared>> {
    dataset
        .samples
        .par_iter()
        .map(|s| {
            let graph = sample_graph(s, &dataset.schema);
            Ok(Prepared {
                index: measures.index(s)?,
                input: features.map(|f| AssessInput::new(s, f, graph.clone())),
                graph,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Smooth rule-network output on the (masked) sample.
    pub output: f64,
    pub f: Vec<f64>,
    pub touched: Vec<Vec<usize>>,
    pub critical_rows: Vec<usize>,
    pub mask: Option<Vec<f64>>,
}

/// A rule network optionally preceded by the assessing network.
#[derive(Debug, Clone)]
pub struct DelModel {
    pub net: CompiledRuleNet,
    pub assess: Option<AssessSnapshot>,
}

impl DelModel {
    pub fn from_snapshot(s: &Snapshot) -> Result<Self> {
        let net = CompiledRuleNet::from_state(&s.rules, &s.rule_net, s.rule_config)?;
        let assess = if s.masks_active {
            Some(s.assess.clone().ok_or_else(|| {
                DelError::Snapshot("masks are active but the snapshot has no assess weights".into())
            })?)
        } else {
            None
        };
        Ok(Self { net, assess })
    }

    pub fn features(&self) -> Option<&FeatureSpec> {
        self.assess.as_ref().map(|a| &a.features)
    }

    pub fn mask(&self, p: &Prepared) -> Result<Option<Vec<f64>>> {
        match (&self.assess, &p.input) {
            (None, _) => Ok(None),
            (Some(a), Some(input)) => Ok(Some(crate::assess_net::forward_mask(
                &a.weights,
                &input.graph,
                &input.features,
                &input.base,
            )?)),
            (Some(_), None) => Err(DelError::Config("sample was prepared without assess features".into())),
        }
    }

    pub fn predict(&self, p: &Prepared) -> Result<Prediction> {
        let mask = self.mask(p)?;
        let keep = mask.as_deref().map(keep_rows);
        let (f, touched) = p.index.evaluate(keep.as_deref());
        let trace = self.net.forward(&f, &touched);
        let label = classify_boolean(self.net.rules(), &self.net.theta, &f).label;
        Ok(Prediction {
            label,
            output: trace.output,
            critical_rows: trace.critical_rows,
            f,
            touched,
            mask,
        })
    }

    /// Prepares a single raw sample for this model.
    pub fn prepare_one(&self, sample: &Sample, dataset_schema: &Schema) -> Result<Prepared> {
        let measures = MeasureSet::for_rules(self.net.rules(), dataset_schema)?;
        let graph = sample_graph(sample, dataset_schema);
        Ok(Prepared {
            index: measures.index(sample)?,
            input: self.features().map(|f| AssessInput::new(sample, f, graph.clone())),
            graph,
        })
    }
}

/// Metrics of `model` over prepared samples with the given labels.
pub fn evaluate_prepared(
    model: &DelModel,
    prepared: &[Prepared],
    samples: &[Sample],
    acc_threshold: f64,
) -> Result<Metrics> {
    let preds: Vec<(Label, Vec<usize>)> = prepared
        .par_iter()
        .map(|p| model.predict(p).map(|r| (r.label, r.critical_rows)))
        .collect::<Result<_>>()?;
    let mut c = Confusion::default();
    let (mut hits, mut labeled) = (0, 0);
    for (s, (label, rows)) in samples.iter().zip(&preds) {
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

/// Errors unless `schema` fits the snapshot's rules and assess preprocessing.
pub fn check_schema(snapshot: &Snapshot, schema: &Schema) -> Result<()> {
    snapshot.rules.validate(schema)?;
    if let Some(a) = snapshot.assess.as_ref().filter(|_| snapshot.masks_active) {
        let f = &a.features;
        if f.columns.len() != schema.columns.len() || f.base_len() != schema.base_len {
            return Err(DelError::Snapshot(format!(
                "snapshot expects {} sequence columns and a base vector of {}, the dataset has {} and {}",
                f.columns.len(),
                f.base_len(),
                schema.columns.len(),
                schema.base_len
            )));
        }
    }
    Ok(())
}

/// Metrics of a snapshot on `dataset`.
pub fn evaluate(snapshot: &Snapshot, dataset: &Dataset, acc_threshold: f64) -> Result<Metrics> {
    if dataset.is_empty() {
        return Err(DelError::Config("cannot evaluate on an empty dataset".into()));
    }
    check_schema(snapshot, &dataset.schema)?;
    let model = DelModel::from_snapshot(snapshot)?;
    let measures = MeasureSet::for_rules(&snapshot.rules, &dataset.schema)?;
    let prepared = prepare(dataset, &measures, model.features())?;
    evaluate_prepared(&model, &prepared, &dataset.samples, acc_threshold)
}
