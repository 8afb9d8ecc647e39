//! Two-stage training of the rule network and the assessing network with
//! periodic global threshold search, validation, and snapshots.

mod config;
mod model;
mod protocol;

pub use config::{hash_json, TrainConfig, ACC_THRESHOLD_GENERAL, ACC_THRESHOLD_SPECIAL};
pub use model::{
    check_schema, evaluate, evaluate_prepared, prepare, AssessSnapshot, DelModel, Prediction, Prepared, Snapshot,
};
pub use protocol::{
    closed_open_protocol, stratified_split, MethodRow, NamedDataset, ProtocolReport, ProtocolTable,
};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assess_net::{AssessInput, AssessModel, FeatureSpec};
use crate::error::{DelError, Result};
use crate::link_search::{generate_targets, SearchTrace, TargetMask, TargetRequest};
use crate::measure::{keep_rows, Dataset, Label, MeasureSet};
use crate::numerics::{adam_step, de_optimize_from, de_optimize_local, AdamState, DEConfig, RngStream};
use crate::rule_dsl::RuleSet;
use crate::rule_net::{batch_objective, loss_and_grad, normalizers, theta_bounds, CompiledRuleNet};

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub step: usize,
    pub loss_rule: f64,
    pub loss_assess: f64,
    pub false_neg: usize,
    pub false_pos: usize,
    pub false_critical_ratio: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub recall_prime: f64,
}

/// Outcome counts of one round of target generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetStats {
    pub unchanged: usize,
    pub searched: usize,
    pub failed: usize,
    pub evaluations: usize,
}

/// Hooks into the training loop. `step` is the 0-based step for batch
/// events and the number of completed steps for periodic events.
pub trait TrainObserver {
    fn rule_batch(&mut self, _step: usize, _batch: &[usize], _labels: &[Label], _dropped_rows: usize) {}
    /// `generations` is the number of DE iterations actually run.
    fn global_search(&mut self, _step: usize, _generations: usize, _accepted: bool) {}
    fn validation(&mut self, _step: usize, _record: &ValidationRecord) {}
    fn assess_batch(&mut self, _step: usize, _batch: &[usize], _labels: &[Label], _stats: &TargetStats) {}
}

/// Observer that ignores every event.
#[derive(Debug, Default)]
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Where and how much to write while training.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory for snapshots and the metrics log; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Also write `search_trace.jsonl` with one record per search.
    pub trace_search: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<ValidationRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Index into `snapshots` of the best validation.
    pub best: Option<usize>,
}

impl TrainOutcome {
    pub fn best_snapshot(&self) -> Option<&Snapshot> {
        self.best.map(|i| &self.snapshots[i])
    }
}

/// Higher recall′ wins; ties go to higher accuracy, then to the earlier step.
fn better(a: &ValidationRecord, b: &ValidationRecord) -> bool {
    (a.recall_prime, a.accuracy) > (b.recall_prime, b.accuracy)
}

// Stream keys per purpose.
const KEY_RULE_BATCH: u64 = 1;
const KEY_GLOBAL: u64 = 2;
const KEY_ASSESS_BATCH: u64 = 3;
const KEY_SEARCH: u64 = 4;
const KEY_INIT: u64 = 5;

/// `beta` uniform draws with replacement from each class, positives first.
pub fn balanced_batch(pos: &[usize], neg: &[usize], beta: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * beta);
    for pool in [pos, neg] {
        for _ in 0..beta {
            out.push(pool[rng.below(pool.len())]);
        }
    }
    out
}

struct Writers {
    dir: PathBuf,
    metrics: BufWriter<File>,
    trace: Option<BufWriter<File>>,
}

impl Writers {
    fn open(dir: &Path, trace: bool) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let metrics = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
        let trace = if trace {
            Some(BufWriter::new(File::create(dir.join("search_trace.jsonl"))?))
        } else {
            None
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
            trace,
        })
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    step: usize,
    sample: usize,
    #[serde(flatten)]
    trace: &'a SearchTrace,
}

/// Runs the two-stage schedule of `config` on `dataset`, starting from the
/// thresholds in `rules`.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    rules: &RuleSet,
    options: &TrainOptions,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    rules.validate(&dataset.schema)?;
    let pos = dataset.indices_of(Label::Positive);
    let neg = dataset.indices_of(Label::Negative);
    if pos.is_empty() || neg.is_empty() {
        return Err(DelError::Config(format!(
            "training needs both classes ({} positive, {} negative samples)",
            pos.len(),
            neg.len()
        )));
    }
    let config_hash = config.hash();
    let root = RngStream::new(config.seed);
    let measures = MeasureSet::for_rules(rules, &dataset.schema)?;
    let features = FeatureSpec::fit(&dataset.schema, dataset.samples.iter());
    let prepared = prepare(dataset, &measures, config.use_assess.then_some(&features))?;

    let raw_f: Vec<Vec<f64>> = prepared.iter().map(|p| p.index.values(None)).collect();
    let k = rules.num_measurements();
    let z = normalizers(k, raw_f.iter().map(Vec::as_slice));
    let bounds = theta_bounds(&z, raw_f.iter().map(Vec::as_slice));
    let mut net = CompiledRuleNet::new(rules, z, config.rule_net)?;
    let mut rule_adam = AdamState::new(k, config.l_rule);
    let free_dims: Vec<usize> = (0..k).filter(|&i| !net.frozen[i]).collect();

    let mut assess = AssessModel::new(features, config.l_assess, &mut root.split(KEY_INIT));

    let mut writers = match &options.out_dir {
        Some(d) => Some(Writers::open(d, options.trace_search)?),
        None => None,
    };

    let mut outcome = TrainOutcome {
        history: Vec::new(),
        snapshots: Vec::new(),
        best: None,
    };
    let (mut rule_loss_sum, mut rule_loss_n) = (0.0, 0usize);
    let (mut assess_loss_sum, mut assess_loss_n) = (0.0, 0usize);

    let masks_for = |assess: &AssessModel, idx: &[usize]| -> Result<Vec<Vec<f64>>> {
        idx.par_iter()
            .map(|&i| assess.mask(prepared[i].input.as_ref().expect("assess inputs prepared")))
            .collect()
    };

    for t in 0..config.sigma2 {
        let masks_active = config.use_assess && t >= config.sigma1;

        // Rule update.
        let batch = balanced_batch(&pos, &neg, config.beta, &mut root.split_path(&[KEY_RULE_BATCH, t as u64]));
        let labels: Vec<Label> = batch.iter().map(|&i| dataset.samples[i].y).collect();
        let keeps: Vec<Option<Vec<bool>>> = if masks_active {
            masks_for(&assess, &batch)?.iter().map(|m| Some(keep_rows(m))).collect()
        } else {
            vec![None; batch.len()]
        };
        let dropped: usize = keeps
            .iter()
            .map(|k| k.as_ref().map_or(0, |k| k.iter().filter(|&&x| !x).count()))
            .sum();
        observer.rule_batch(t, &batch, &labels, dropped);
        let evaluated: Vec<(Vec<f64>, Vec<Vec<usize>>)> = batch
            .iter()
            .zip(&keeps)
            .map(|(&i, keep)| prepared[i].index.evaluate(keep.as_deref()))
            .collect();
        let mut grad = vec![0.0; k];
        let mut batch_loss = 0.0;
        for ((f, touched), &i) in evaluated.iter().zip(&batch) {
            let s = &dataset.samples[i];
            let (loss, g, _) = loss_and_grad(&net, f, touched, s.y, &s.y_feat);
            batch_loss += loss.total;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        adam_step(&mut rule_adam, &mut net.theta, &grad)?;
        rule_loss_sum += batch_loss * scale;
        rule_loss_n += 1;

        // Global search on the same batch.
        if (t + 1) % config.mu_gopt == 0 {
            let pairs: Vec<(&[f64], Label)> = evaluated
                .iter()
                .zip(&labels)
                .map(|((f, _), &y)| (f.as_slice(), y))
                .collect();
            let (generations, accepted) = if free_dims.is_empty() {
                (0, false)
            } else {
                let current = batch_objective(&net, pairs.iter().copied());
                let de_bounds: Vec<(f64, f64)> = free_dims.iter().map(|&d| bounds[d]).collect();
                let seed = root.split_path(&[KEY_GLOBAL, t as u64]).seed();
                let de_cfg = DEConfig::for_bounds(de_bounds, seed);
                let start: Vec<f64> = free_dims.iter().map(|&d| net.theta[d]).collect();
                let mut probe = net.clone();
                let objective = |x: &[f64]| {
                    for (&d, &v) in free_dims.iter().zip(x) {
                        probe.theta[d] = v;
                    }
                    -batch_objective(&probe, pairs.iter().copied())
                };
                let result = match config.de_init_radius {
                    Some(r) => de_optimize_local(objective, &de_cfg, config.sigma_gopt, &start, r)?,
                    None => de_optimize_from(objective, &de_cfg, config.sigma_gopt, Some(&start))?,
                };
                let improved = -result.value > current;
                if improved {
                    for (&d, &v) in free_dims.iter().zip(&result.best) {
                        net.theta[d] = v;
                    }
                }
                (result.history.len() - 1, improved)
            };
            observer.global_search(t + 1, generations, accepted);
        }

        // Assessing-network update.
        if config.use_assess {
            let stage2 = t >= config.sigma1;
            let abatch =
                balanced_batch(&pos, &neg, config.beta, &mut root.split_path(&[KEY_ASSESS_BATCH, t as u64]));
            let alabels: Vec<Label> = abatch.iter().map(|&i| dataset.samples[i].y).collect();
            let current = if stage2 { Some(masks_for(&assess, &abatch)?) } else { None };
            let requests: Vec<TargetRequest<'_>> = abatch
                .iter()
                .enumerate()
                .map(|(j, &i)| TargetRequest {
                    index: &prepared[i].index,
                    graph: &prepared[i].graph,
                    y: dataset.samples[i].y,
                    current_mask: current.as_ref().map(|c| c[j].as_slice()),
                })
                .collect();
            let targets = generate_targets(
                &requests,
                &net,
                stage2,
                &config.search,
                &root.split_path(&[KEY_SEARCH, t as u64]),
            )?;
            let mut stats = TargetStats::default();
            let mut train_pairs: Vec<(&AssessInput, &[f64])> = Vec::with_capacity(targets.len());
            for (j, (target, trace)) in targets.iter().enumerate() {
                match target {
                    TargetMask::Unchanged(_) => stats.unchanged += 1,
                    TargetMask::Searched(_) => stats.searched += 1,
                    TargetMask::Failed => stats.failed += 1,
                }
                if let Some(tr) = trace {
                    stats.evaluations += tr.evaluations;
                    if let Some(w) = writers.as_mut().and_then(|w| w.trace.as_mut()) {
                        let line = TraceLine {
                            step: t,
                            sample: abatch[j],
                            trace: tr,
                        };
                        serde_json::to_writer(&mut *w, &line)?;
                        w.write_all(b"\n")?;
                    }
                }
                if let Some(m) = target.mask() {
                    let input = prepared[abatch[j]].input.as_ref().expect("assess inputs prepared");
                    train_pairs.push((input, m));
                }
            }
            observer.assess_batch(t, &abatch, &alabels, &stats);
            if !train_pairs.is_empty() {
                assess_loss_sum += assess.train_step(&train_pairs)?;
                assess_loss_n += 1;
            }
        }

        // Validation on the training set.
        if (t + 1) % config.mu_val == 0 {
            let step = t + 1;
            let model = DelModel {
                net: net.clone(),
                assess: masks_active.then(|| AssessSnapshot {
                    weights: assess.weights.clone(),
                    features: assess.features.clone(),
                }),
            };
            let metrics = evaluate_prepared(&model, &prepared, &dataset.samples, config.acc_threshold)?;
            let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
            let record = ValidationRecord {
                step,
                loss_rule: mean(rule_loss_sum, rule_loss_n),
                loss_assess: mean(assess_loss_sum, assess_loss_n),
                false_neg: metrics.false_neg,
                false_pos: metrics.false_pos,
                false_critical_ratio: metrics.false_critical_ratio,
                accuracy: metrics.accuracy,
                recall: metrics.recall,
                recall_prime: metrics.recall_prime,
            };
            (rule_loss_sum, rule_loss_n, assess_loss_sum, assess_loss_n) = (0.0, 0, 0.0, 0);
            let snapshot = Snapshot {
                step,
                rules: rules.clone(),
                rule_net: net.state(),
                rule_config: net.config,
                assess: config.use_assess.then(|| AssessSnapshot {
                    weights: assess.weights.clone(),
                    features: assess.features.clone(),
                }),
                masks_active,
                acc_threshold: config.acc_threshold,
                metrics,
                loss_rule: record.loss_rule,
                loss_assess: record.loss_assess,
                config_hash: config_hash.clone(),
            };
            if let Some(w) = writers.as_mut() {
                snapshot.save(&w.dir)?;
                serde_json::to_writer(&mut w.metrics, &record)?;
                w.metrics.write_all(b"\n")?;
                w.metrics.flush()?;
            }
            log::info!(
                "step {step}: accuracy {:.4} recall {:.4} recall' {:.4} loss_rule {:.5} loss_assess {:.5}",
                record.accuracy,
                record.recall,
                record.recall_prime,
                record.loss_rule,
                record.loss_assess
            );
            observer.validation(step, &record);
            let is_best = outcome
                .best
                .is_none_or(|b| better(&record, &outcome.history[b]));
            if is_best {
                outcome.best = Some(outcome.history.len());
            }
            outcome.history.push(record);
            outcome.snapshots.push(snapshot);
        }
    }
    if let Some(w) = writers.as_mut() {
        w.metrics.flush()?;
        if let Some(tr) = w.trace.as_mut() {
            tr.flush()?;
        }
    }
    Ok(outcome)
}

/// Runs `restarts` independent trainings (restart 0 uses `config.seed`,
/// later ones derived seeds) and returns every outcome with the index of
/// the one whose best validation is highest.
pub fn train_restarts(
    config: &TrainConfig,
    dataset: &Dataset,
    rules: &RuleSet,
    restarts: usize,
    options: &TrainOptions,
    observer: &mut dyn TrainObserver,
) -> Result<(Vec<TrainOutcome>, Option<usize>)> {
    if restarts == 0 {
        return Err(DelError::Config("restarts must be at least 1".into()));
    }
    let mut outcomes = Vec::with_capacity(restarts);
    let mut best: Option<(usize, ValidationRecord)> = None;
    for r in 0..restarts {
        let cfg = TrainConfig {
            seed: if r == 0 {
                config.seed
            } else {
                RngStream::new(config.seed).split(r as u64).seed()
            },
            ..config.clone()
        };
        let opts = TrainOptions {
            out_dir: match (&options.out_dir, restarts) {
                (Some(d), 1) => Some(d.clone()),
                (Some(d), _) => Some(d.join(format!("restart_{r}"))),
                (None, _) => None,
            },
            ..options.clone()
        };
        let out = train(&cfg, dataset, rules, &opts, observer)?;
        if let Some(b) = out.best {
            let rec = out.history[b].clone();
            if best.as_ref().is_none_or(|(_, cur)| better(&rec, cur)) {
                best = Some((r, rec));
            }
        }
        outcomes.push(out);
    }
    Ok((outcomes, best.map(|(r, _)| r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;

    #[test]
    fn balanced_batch_draws_beta_per_class() {
        let b = balanced_batch(&[0, 1], &[2, 3, 4], 4, &mut seeded_rng(1));
        assert_eq!(b.len(), 8);
        assert!(b[..4].iter().all(|i| *i < 2));
        assert!(b[4..].iter().all(|i| *i >= 2));
    }

    #[test]
    fn ties_prefer_accuracy() {
        let rec = |rp: f64, acc: f64| ValidationRecord {
            step: 0,
            loss_rule: 0.0,
            loss_assess: 0.0,
            false_neg: 0,
            false_pos: 0,
            false_critical_ratio: 0.0,
            accuracy: acc,
            recall: rp.abs(),
            recall_prime: rp,
        };
        assert!(better(&rec(0.8, 0.9), &rec(0.7, 0.99)));
        assert!(better(&rec(0.8, 0.95), &rec(0.8, 0.94)));
        assert!(!better(&rec(0.8, 0.95), &rec(0.8, 0.95)));
    }
}
