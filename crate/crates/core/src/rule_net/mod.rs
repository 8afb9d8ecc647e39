//! The rule tree compiled into a differentiable scoring network.
//!
//! Scores use a violation-positive orientation throughout: a leaf scores
//! `tanh((f - theta) / z)` (negated for `above` leaves), so a positive
//! value means the constraint is broken. Under that orientation AND takes
//! the maximum of its children and OR the minimum, and a positive network
//! output predicts the positive ("fails the rules") class. The compliance
//! score of the original min/max formulation is simply the negated output.

mod explain;
mod loss;

pub use explain::{explain, Explanation, LeafExplanation};
pub use loss::{
    batch_objective, binary_cross_entropy, critical_row_distribution, focal_loss,
    focal_loss_grad, loss_and_grad, LossBreakdown,
};

use serde::{Deserialize, Serialize};

use crate::error::{DelError, Result};
use crate::measure::Label;
use crate::rule_dsl::{Direction, LeafRef, LogicOp, Node, RuleSet};

/// Smooth-scoring and loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleNetConfig {
    /// Softmin temperature for critical-row responsibilities.
    pub tau_soft: f64,
    /// Output-to-probability slope: `p = sigmoid(slope * output)`.
    pub slope: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    /// Weight of the critical-feature cross-entropy term (0 disables it).
    pub critical_weight: f64,
    /// Floor inside the cross-entropy logarithm.
    pub ce_epsilon: f64,
}

impl Default for RuleNetConfig {
    fn default() -> Self {
        Self {
            tau_soft: 0.25,
            slope: 3.0,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            critical_weight: 1.0,
            ce_epsilon: 1e-6,
        }
    }
}

/// Trainable state of a rule network: thresholds, normalizers, frozen flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleNetState {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub frozen: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
enum ArenaNode {
    Leaf(usize),
    Logic { op: LogicOp, children: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRuleNet {
    rules: RuleSet,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub frozen: Vec<bool>,
    pub config: RuleNetConfig,
    leaves: Vec<LeafRef>,
    /// Post-order: children precede parents, the root is last.
    arena: Vec<ArenaNode>,
}

/// Everything computed by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub f_values: Vec<f64>,
    /// Per leaf, violation-positive, in (-1, 1).
    pub leaf_scores: Vec<f64>,
    /// Per arena node (post-order, root last).
    pub node_scores: Vec<f64>,
    pub output: f64,
    /// Leaf reached by following the arg-extreme child from the root.
    pub argmin_leaves: Vec<usize>,
    /// Rows touched by the measurements of `argmin_leaves`, ascending.
    pub critical_rows: Vec<usize>,
    /// Per-leaf soft scores feeding the softmin responsibilities.
    pub soft_scores: Vec<f64>,
    pub responsibilities: Vec<f64>,
    /// Touched rows per measurement, as passed in.
    pub touched: Vec<Vec<usize>>,
    /// For each arena logic node, the index (within its children) of the routed child.
    routed_child: Vec<usize>,
    /// For each arena node, the leaf its value comes from.
    chain_leaf: Vec<usize>,
    /// For each leaf, the leaf whose score its soft score equals.
    soft_source: Vec<usize>,
}

impl ForwardTrace {
    pub fn predicted(&self) -> Label {
        Label::from_sign(self.output)
    }

    /// Compliance score, `-output`: positive when every rule holds.
    pub fn compliance(&self) -> f64 {
        -self.output
    }
}

/// `tanh((f - theta) / z)` for below-leaves, negated for above-leaves.
#[inline]
pub fn leaf_score(f: f64, theta: f64, z: f64, direction: Direction) -> f64 {
    direction.sign() * ((f - theta) / z).tanh()
}

/// Per-measurement range over the given value vectors; zero ranges become 1.
pub fn normalizers<'a>(k: usize, f_rows: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for f in f_rows {
        for i in 0..k {
            lo[i] = lo[i].min(f[i]);
            hi[i] = hi[i].max(f[i]);
        }
    }
    (0..k)
        .map(|i| {
            let r = hi[i] - lo[i];
            if r.is_finite() && r > 0.0 {
                r
            } else {
                1.0
            }
        })
        .collect()
}

/// Search box for each threshold: observed range widened by 10% of `z`.
pub fn theta_bounds<'a>(
    z: &[f64],
    f_rows: impl IntoIterator<Item = &'a [f64]>,
) -> Vec<(f64, f64)> {
    let k = z.len();
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for f in f_rows {
        for i in 0..k {
            lo[i] = lo[i].min(f[i]);
            hi[i] = hi[i].max(f[i]);
        }
    }
    (0..k)
        .map(|i| {
            if lo[i].is_finite() {
                (lo[i] - 0.1 * z[i], hi[i] + 0.1 * z[i])
            } else {
                (-0.1 * z[i], 0.1 * z[i])
            }
        })
        .collect()
}

impl CompiledRuleNet {
    /// Compiles `rules` with its expert thresholds and the given normalizers.
    pub fn new(rules: &RuleSet, z: Vec<f64>, config: RuleNetConfig) -> Result<Self> {
        let k = rules.num_measurements();
        if z.len() != k {
            return Err(DelError::Shape(format!("{} normalizers for {k} measurements", z.len())));
        }
        if let Some(i) = z.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(DelError::Config(format!("normalizer z[{i}] = {} is not positive", z[i])));
        }
        let mut arena = Vec::new();
        let mut next_leaf = 0;
        build_arena(&rules.root, &mut arena, &mut next_leaf);
        Ok(Self {
            rules: rules.clone(),
            theta: rules.theta.clone(),
            z,
            frozen: rules.frozen.clone(),
            config,
            leaves: rules.leaves(),
            arena,
        })
    }

    pub fn from_state(rules: &RuleSet, state: &RuleNetState, config: RuleNetConfig) -> Result<Self> {
        let mut net = Self::new(rules, state.z.clone(), config)?;
        if state.theta.len() != net.theta.len() || state.frozen.len() != net.frozen.len() {
            return Err(DelError::Shape("rule-net state does not match the rule set".into()));
        }
        net.theta = state.theta.clone();
        net.frozen = state.frozen.clone();
        Ok(net)
    }

    pub fn state(&self) -> RuleNetState {
        RuleNetState {
            theta: self.theta.clone(),
            z: self.z.clone(),
            frozen: self.frozen.clone(),
        }
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn leaves(&self) -> &[LeafRef] {
        &self.leaves
    }

    pub fn num_measurements(&self) -> usize {
        self.theta.len()
    }

    /// Rule set carrying the current thresholds.
    pub fn current_rules(&self) -> RuleSet {
        RuleSet {
            theta: self.theta.clone(),
            frozen: self.frozen.clone(),
            ..self.rules.clone()
        }
    }

    /// Smooth forward pass.
    pub fn forward(&self, f: &[f64], touched: &[Vec<usize>]) -> ForwardTrace {
        let leaf_scores: Vec<f64> = self
            .leaves
            .iter()
            .map(|l| leaf_score(f[l.measurement], self.theta[l.measurement], self.z[l.measurement], l.direction))
            .collect();
        self.propagate(f, touched, leaf_scores)
    }

    /// Output with `tanh` replaced by `sign`; its sign is the crisp label.
    pub fn forward_hard(&self, f: &[f64]) -> f64 {
        let leaf_scores: Vec<f64> = self
            .leaves
            .iter()
            .map(|l| l.direction.sign() * sign(f[l.measurement] - self.theta[l.measurement]))
            .collect();
        let mut vals = vec![0.0; self.arena.len()];
        for (i, node) in self.arena.iter().enumerate() {
            vals[i] = match node {
                ArenaNode::Leaf(l) => leaf_scores[*l],
                ArenaNode::Logic { op, children } => {
                    let it = children.iter().map(|&c| vals[c]);
                    match op {
                        LogicOp::And => it.fold(f64::NEG_INFINITY, f64::max),
                        LogicOp::Or => it.fold(f64::INFINITY, f64::min),
                    }
                }
            };
        }
        *vals.last().expect("non-empty tree")
    }

    /// Smooth output only, without tracing.
    pub fn output(&self, f: &[f64]) -> f64 {
        let mut vals = vec![0.0; self.arena.len()];
        for (i, node) in self.arena.iter().enumerate() {
            vals[i] = match node {
                ArenaNode::Leaf(l) => {
                    let leaf = self.leaves[*l];
                    let m = leaf.measurement;
                    leaf_score(f[m], self.theta[m], self.z[m], leaf.direction)
                }
                ArenaNode::Logic { op, children } => {
                    let it = children.iter().map(|&c| vals[c]);
                    match op {
                        LogicOp::And => it.fold(f64::NEG_INFINITY, f64::max),
                        LogicOp::Or => it.fold(f64::INFINITY, f64::min),
                    }
                }
            };
        }
        *vals.last().expect("non-empty tree")
    }

    fn propagate(&self, f: &[f64], touched: &[Vec<usize>], leaf_scores: Vec<f64>) -> ForwardTrace {
        let n = self.arena.len();
        let mut node_scores = vec![0.0; n];
        let mut routed_child = vec![0usize; n];
        let mut chain_leaf = vec![0usize; n];
        for (i, node) in self.arena.iter().enumerate() {
            match node {
                ArenaNode::Leaf(l) => {
                    node_scores[i] = leaf_scores[*l];
                    chain_leaf[i] = *l;
                }
                ArenaNode::Logic { op, children } => {
                    let mut best = 0;
                    for (j, &c) in children.iter().enumerate().skip(1) {
                        let better = match op {
                            LogicOp::And => node_scores[c] > node_scores[children[best]],
                            LogicOp::Or => node_scores[c] < node_scores[children[best]],
                        };
                        if better {
                            best = j;
                        }
                    }
                    routed_child[i] = best;
                    node_scores[i] = node_scores[children[best]];
                    chain_leaf[i] = chain_leaf[children[best]];
                }
            }
        }
        let root = n - 1;
        let output = node_scores[root];
        let routed = chain_leaf[root];

        // Soft scores: each leaf's score clipped by the values of its OR
        // ancestors, so no leaf outranks the routed one.
        let nl = self.leaves.len();
        let mut soft_scores = vec![0.0; nl];
        let mut soft_source = vec![0usize; nl];
        let mut stack = vec![(root, f64::INFINITY, usize::MAX)];
        while let Some((i, clip, clip_src)) = stack.pop() {
            match &self.arena[i] {
                ArenaNode::Leaf(l) => {
                    if leaf_scores[*l] <= clip {
                        soft_scores[*l] = leaf_scores[*l];
                        soft_source[*l] = *l;
                    } else {
                        soft_scores[*l] = clip;
                        soft_source[*l] = clip_src;
                    }
                }
                ArenaNode::Logic { op, children } => {
                    let (c, s) = if *op == LogicOp::Or && node_scores[i] < clip {
                        (node_scores[i], chain_leaf[i])
                    } else {
                        (clip, clip_src)
                    };
                    for &ch in children {
                        stack.push((ch, c, s));
                    }
                }
            }
        }
        let responsibilities = softmax(&soft_scores, self.config.tau_soft);

        let mut critical_rows = touched
            .get(self.leaves[routed].measurement)
            .cloned()
            .unwrap_or_default();
        critical_rows.sort_unstable();
        critical_rows.dedup();

        ForwardTrace {
            f_values: f.to_vec(),
            leaf_scores,
            node_scores,
            output,
            argmin_leaves: vec![routed],
            critical_rows,
            soft_scores,
            responsibilities,
            touched: touched.to_vec(),
            routed_child,
            chain_leaf,
            soft_source,
        }
    }
}

fn build_arena(node: &Node, arena: &mut Vec<ArenaNode>, next_leaf: &mut usize) -> usize {
    match node {
        Node::Leaf { .. } => {
            arena.push(ArenaNode::Leaf(*next_leaf));
            *next_leaf += 1;
        }
        Node::Logic { op, children } => {
            let kids = children
                .iter()
                .map(|c| build_arena(c, arena, next_leaf))
                .collect();
            arena.push(ArenaNode::Logic {
                op: *op,
                children: kids,
            });
        }
    }
    arena.len() - 1
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn softmax(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| ((s - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule_dsl::parse_ruleset;

    fn net(src: &str) -> CompiledRuleNet {
        let rs = parse_ruleset(src).unwrap();
        let k = rs.num_measurements();
        CompiledRuleNet::new(&rs, vec![1.0; k], RuleNetConfig::default()).unwrap()
    }

    #[test]
    fn leaf_score_examples() {
        assert_eq!(leaf_score(2.0, 2.0, 3.0, Direction::Below), 0.0);
        assert!((leaf_score(5.0, 2.0, 3.0, Direction::Below) - 1f64.tanh()).abs() < 1e-15);
        assert!((leaf_score(-1.0, 2.0, 3.0, Direction::Above) - 1f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn single_leaf_output_is_leaf_score() {
        let n = net("rule R { leaf m0 below 1 } measure m0 = count");
        let t = n.forward(&[1.7], &[vec![]]);
        assert_eq!(t.output, leaf_score(1.7, 1.0, 1.0, Direction::Below));
        assert_eq!(t.responsibilities, vec![1.0]);
    }

    #[test]
    fn and_routes_to_most_violated_leaf() {
        // compliance scores {0.3, -0.2, 0.9}: the -0.2 leaf is the minimum
        let n = net(
            "rule R { and { leaf m0 below 0 leaf m1 below 0 leaf m2 below 0 } }
             measure m0 = count measure m1 = count measure m2 = count",
        );
        let f: Vec<f64> = [-0.3f64, 0.2, -0.9].iter().map(|v| v.atanh()).collect();
        let t = n.forward(&f, &[vec![0], vec![1, 2], vec![3]]);
        assert!((t.compliance() + 0.2).abs() < 1e-12);
        assert_eq!(t.argmin_leaves, vec![1]);
        assert_eq!(t.critical_rows, vec![1, 2]);
        let best = t.responsibilities.iter().cloned().fold(0.0, f64::max);
        assert_eq!(t.responsibilities[1], best);
        assert!((t.responsibilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_route_to_lowest_index() {
        let n = net(
            "rule R { and { leaf m0 below 0 leaf m1 below 0 } } measure m0 = count measure m1 = count",
        );
        let t = n.forward(&[0.5, 0.5], &[vec![], vec![]]);
        assert_eq!(t.argmin_leaves, vec![0]);
    }

    #[test]
    fn or_clipping_keeps_routed_leaf_on_top() {
        // AND(OR(a, b), c): a is the largest leaf but the OR takes min(a, b).
        let n = net(
            "rule R cnf { and { or { leaf m0 below 0 leaf m1 below 0 } leaf m2 below 0 } }
             measure m0 = count measure m1 = count measure m2 = count",
        );
        let f: Vec<f64> = [0.9f64, 0.5, 0.7].iter().map(|v| v.atanh()).collect();
        let t = n.forward(&f, &[vec![], vec![], vec![]]);
        assert_eq!(t.argmin_leaves, vec![2]);
        let r = &t.responsibilities;
        assert!(r[2] >= r[0] && r[2] >= r[1]);
        assert!((t.soft_scores[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn normalizer_of_constant_measurement_is_one() {
        let rows = [vec![1.0, 2.0], vec![1.0, 5.0]];
        let z = normalizers(2, rows.iter().map(Vec::as_slice));
        assert_eq!(z, vec![1.0, 3.0]);
        let b = theta_bounds(&z, rows.iter().map(Vec::as_slice));
        assert_eq!(b, vec![(0.9, 1.1), (2.0 - 0.30000000000000004, 5.0 + 0.30000000000000004)]);
    }
}
