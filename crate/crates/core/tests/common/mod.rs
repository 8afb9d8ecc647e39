//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use del_core::assess_net::{build_graph, AssessInput, RowGraph};
use del_core::measure::{Column, ColumnKind, Label, Sample, Schema, Value};
use del_core::numerics::{Matrix, RngStream};
use del_core::rule_dsl::{Aggregation, Direction, Measurement, Node, RuleSet};

/// A random AND/OR tree over measurements `0..k`, each used by exactly one
/// leaf, nested at most `depth` levels.
pub fn random_tree(rng: &mut RngStream, k: usize, depth: usize) -> Node {
    let mut ids: Vec<usize> = (0..k).collect();
    rng.shuffle(&mut ids);
    build(rng, &ids, depth)
}

fn build(rng: &mut RngStream, ids: &[usize], depth: usize) -> Node {
    let leaf = |rng: &mut RngStream, m: usize| {
        let d = if rng.bernoulli(0.5) {
            Direction::Below
        } else {
            Direction::Above
        };
        Node::leaf(m, d)
    };
    if ids.len() == 1 && (depth == 0 || rng.bernoulli(0.7)) {
        return leaf(rng, ids[0]);
    }
    if depth == 0 {
        let children = ids.iter().map(|&m| leaf(rng, m)).collect();
        return if rng.bernoulli(0.5) {
            Node::and(children)
        } else {
            Node::or(children)
        };
    }
    let parts = 1 + rng.below(ids.len().min(3));
    let mut cuts: Vec<usize> = (1..ids.len()).collect();
    rng.shuffle(&mut cuts);
    let mut cuts: Vec<usize> = cuts.into_iter().take(parts - 1).collect();
    cuts.sort_unstable();
    let mut children = Vec::new();
    let mut start = 0;
    for c in cuts.into_iter().chain([ids.len()]) {
        children.push(build(rng, &ids[start..c], depth - 1));
        start = c;
    }
    if rng.bernoulli(0.5) {
        Node::and(children)
    } else {
        Node::or(children)
    }
}

/// A rule set with `k` plain count measurements over `root`.
pub fn count_rules(root: Node, theta: Vec<f64>) -> RuleSet {
    let k = theta.len();
    RuleSet {
        name: "random".into(),
        cnf: false,
        root,
        measurements: (0..k)
            .map(|id| Measurement {
                id,
                aggregation: Aggregation::Count,
                target_column: None,
                predicates: vec![],
            })
            .collect(),
        theta,
        frozen: vec![false; k],
    }
}

/// Random graph, features and base vector for the assessing network.
pub fn random_assess_input(rng: &mut RngStream, n: usize, width: usize, base_len: usize) -> AssessInput {
    let positions: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.0, 10.0)).collect();
    let graph: RowGraph = build_graph(&positions, 2.0);
    let data = (0..n * width).map(|_| rng.normal()).collect();
    AssessInput {
        graph,
        features: Matrix::from_vec(n, width, data).unwrap(),
        base: (0..base_len).map(|_| rng.normal()).collect(),
    }
}

/// Schema with `position`, a categorical `type` and a numeric `length`.
pub fn small_schema() -> Schema {
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
            Column {
                name: "length".into(),
                kind: ColumnKind::Numeric,
            },
        ],
        1,
    )
    .unwrap()
}

pub fn row(position: f64, kind: &str, length: f64) -> Vec<Value> {
    vec![Value::Num(position), Value::Cat(kind.into()), Value::Num(length)]
}

pub fn sample(rows: Vec<Vec<Value>>, y: Label) -> Sample {
    Sample {
        x_seq: rows,
        x_base: vec![0.0],
        y,
        y_feat: vec![],
    }
}

/// Max relative error between two gradients, with `floor` guarding the
/// denominator for near-zero entries.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
