//! Gradient-linking search: find masks that make the current rule network
//! classify a sample correctly by dropping prefixes of random-walk paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assess_net::RowGraph;
use crate::error::{DelError, Result};
use crate::measure::{keep_rows, Label, SampleIndex};
use crate::numerics::RngStream;
use crate::rule_net::CompiledRuleNet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Greedy steps (drawn step sizes).
    pub chi: usize,
    /// Paths tried per step.
    pub tau: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { chi: 15, tau: 10 }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chi == 0 || self.tau == 0 {
            return Err(DelError::Config("search needs chi >= 1 and tau >= 1".into()));
        }
        Ok(())
    }

    pub fn max_evaluations(&self) -> usize {
        self.chi * self.tau
    }
}

/// `|output - y| < 1`, the literal correctness test on the smooth output.
#[inline]
pub fn is_correct(output: f64, y: Label) -> bool {
    (output - y.sign()).abs() < 1.0
}

/// Walk of `length` visits starting at `start`. Steps go to a uniform
/// neighbor; at an isolated node the walk restarts from a uniform node.
/// Repeated visits are kept; callers deduplicate.
pub fn random_walk(g: &RowGraph, start: usize, length: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut path = Vec::with_capacity(length);
    if g.is_empty() || length == 0 {
        return path;
    }
    let mut cur = start;
    path.push(cur);
    while path.len() < length {
        let ns = g.neighbors(cur);
        cur = if ns.is_empty() {
            rng.below(g.n())
        } else {
            ns[rng.below(ns.len())]
        };
        path.push(cur);
    }
    path
}

fn dedup_in_order(path: &mut Vec<usize>, n: usize) {
    let mut seen = vec![false; n];
    path.retain(|&r| !std::mem::replace(&mut seen[r], true));
}

/// Per-sample record of one search, suitable for a JSON-lines trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub evaluations: usize,
    pub step_sizes: Vec<usize>,
    pub path_lengths: Vec<usize>,
    /// `(step, path)` of the first mask that fixed the prediction.
    pub success: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// 0/1 mask, or `None` when every candidate failed.
    pub mask: Option<Vec<f64>>,
    pub trace: SearchTrace,
}

/// Greedy search for a mask that makes `net` predict `y` on the sample
/// described by `index` (whose rows form the graph `g`).
pub fn greedy_search(
    index: &SampleIndex,
    y: Label,
    net: &CompiledRuleNet,
    g: &RowGraph,
    cfg: &SearchConfig,
    rng: &mut RngStream,
) -> SearchOutcome {
    let n = index.n_rows();
    let mut trace = SearchTrace {
        evaluations: 0,
        step_sizes: Vec::new(),
        path_lengths: Vec::new(),
        success: None,
    };
    if n == 0 {
        return SearchOutcome { mask: None, trace };
    }
    let (f, touched) = index.evaluate(None);
    let critical = net.forward(&f, &touched).critical_rows;

    let steps: Vec<usize> = (0..cfg.chi).map(|_| 1 + rng.below(n)).collect();
    let walk_len = *steps.iter().max().expect("chi >= 1");
    let paths: Vec<Vec<usize>> = (0..cfg.tau)
        .map(|_| {
            let start = rng.below(n);
            let mut p = random_walk(g, start, walk_len, rng);
            p.extend_from_slice(&critical);
            rng.shuffle(&mut p);
            dedup_in_order(&mut p, n);
            p
        })
        .collect();
    trace.path_lengths = paths.iter().map(Vec::len).collect();
    trace.step_sizes = steps.clone();

    let mut keep = vec![true; n];
    for (si, &s) in steps.iter().enumerate() {
        for (pi, path) in paths.iter().enumerate() {
            let s = s.min(path.len());
            keep.iter_mut().for_each(|k| *k = true);
            for &r in &path[..s] {
                keep[r] = false;
            }
            trace.evaluations += 1;
            if is_correct(net.output(&index.values(Some(&keep))), y) {
                trace.success = Some((si, pi));
                let mask = keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
                return SearchOutcome {
                    mask: Some(mask),
                    trace,
                };
            }
        }
    }
    SearchOutcome { mask: None, trace }
}

/// One member of an assess batch.
#[derive(Debug, Clone, Copy)]
pub struct TargetRequest<'a> {
    pub index: &'a SampleIndex,
    pub graph: &'a RowGraph,
    pub y: Label,
    /// The assessing model's current mask (stage 2 only).
    pub current_mask: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetMask {
    /// Already correct: all-ones (stage 1) or the model's own mask (stage 2).
    Unchanged(Vec<f64>),
    /// Misclassified and fixed by search.
    Searched(Vec<f64>),
    /// Misclassified and the search failed; excluded from training.
    Failed,
}

impl TargetMask {
    pub fn mask(&self) -> Option<&[f64]> {
        match self {
            TargetMask::Unchanged(m) | TargetMask::Searched(m) => Some(m),
            TargetMask::Failed => None,
        }
    }
}

/// Target masks for a batch. With `stage2`, predictions are made on the
/// samples masked by `current_mask`; otherwise on raw samples. Searches
/// run in parallel, each with the stream `rng.split(i)` for batch position
/// `i`, so results do not depend on scheduling.
pub fn generate_targets(
    batch: &[TargetRequest<'_>],
    net: &CompiledRuleNet,
    stage2: bool,
    cfg: &SearchConfig,
    rng: &RngStream,
) -> Result<Vec<(TargetMask, Option<SearchTrace>)>> {
    cfg.validate()?;
    batch
        .par_iter()
        .enumerate()
        .map(|(i, req)| {
            let n = req.index.n_rows();
            let base = if stage2 {
                let m = req.current_mask.ok_or_else(|| {
                    DelError::Config("stage-2 target generation needs the current masks".into())
                })?;
                if m.len() != n {
                    return Err(DelError::Shape(format!("mask has {} entries for {n} rows", m.len())));
                }
                m.to_vec()
            } else {
                vec![1.0; n]
            };
            let keep = keep_rows(&base);
            let out = net.output(&req.index.values(Some(&keep)));
            if is_correct(out, req.y) {
                return Ok((TargetMask::Unchanged(base), None));
            }
            let mut stream = rng.split(i as u64);
            let found = greedy_search(req.index, req.y, net, req.graph, cfg, &mut stream);
            let target = match found.mask {
                Some(m) => TargetMask::Searched(m),
                None => TargetMask::Failed,
            };
            Ok((target, Some(found.trace)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assess_net::build_graph;
    use crate::numerics::seeded_rng;

    #[test]
    fn walk_on_complete_graph_has_requested_length() {
        let g = build_graph(&[0.0, 0.1, 0.2, 0.3], f64::INFINITY);
        let p = random_walk(&g, 2, 3, &mut seeded_rng(1));
        assert_eq!(p.len(), 3);
        assert_eq!(p[0], 2);
        for w in p.windows(2) {
            assert!(g.has_edge(w[0], w[1]));
        }
    }

    #[test]
    fn walk_on_edgeless_graph_restarts() {
        let g = build_graph(&[0.0, 10.0, 20.0], 1.0);
        let p = random_walk(&g, 0, 50, &mut seeded_rng(2));
        assert_eq!(p.len(), 50);
        assert!(p.iter().all(|&r| r < 3));
        assert!((0..3).all(|r| p.contains(&r)));
    }

    #[test]
    fn walk_is_reproducible() {
        let g = build_graph(&[0.0, 1.0, 2.0, 3.0, 9.0], 1.5);
        let a = random_walk(&g, 1, 20, &mut seeded_rng(3));
        let b = random_walk(&g, 1, 20, &mut seeded_rng(3));
        assert_eq!(a, b);
    }

    #[test]
    fn correctness_test_is_sign_agreement() {
        assert!(is_correct(0.3, Label::Positive));
        assert!(!is_correct(-0.3, Label::Positive));
        assert!(is_correct(-0.01, Label::Negative));
        assert!(!is_correct(0.0, Label::Negative));
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let mut p = vec![3, 1, 3, 0, 1];
        dedup_in_order(&mut p, 4);
        assert_eq!(p, vec![3, 1, 0]);
    }
}
