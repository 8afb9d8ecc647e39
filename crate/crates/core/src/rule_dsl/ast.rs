use serde::{Deserialize, Serialize};

use crate::error::{DelError, Result};
use crate::measure::{ColumnKind, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Equals,
    LessThan,
    GreaterThan,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Equals => "==",
            Comparison::LessThan => "<",
            Comparison::GreaterThan => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Num(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub comparison: Comparison,
    pub value: Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Count,
    Max,
}

/// An aggregate query over the rows that satisfy every predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub id: usize,
    pub aggregation: Aggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_column: Option<String>,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
}

/// `Below` holds when `f < theta`; `Above` when `f > theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Below,
    Above,
}

impl Direction {
    /// +1 for below, -1 for above: multiplies `(f - theta)` into the
    /// violation-positive orientation.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Direction::Below => 1.0,
            Direction::Above => -1.0,
        }
    }

    #[inline]
    pub fn holds(self, f: f64, theta: f64) -> bool {
        match self {
            Direction::Below => f < theta,
            Direction::Above => f > theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicOp {
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        measurement: usize,
        direction: Direction,
    },
    Logic {
        op: LogicOp,
        children: Vec<Node>,
    },
}

/// A leaf in depth-first order; its position in [`RuleSet::leaves`] is the leaf id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafRef {
    pub measurement: usize,
    pub direction: Direction,
}

impl Node {
    pub fn leaf(measurement: usize, direction: Direction) -> Node {
        Node::Leaf {
            measurement,
            direction,
        }
    }

    pub fn and(children: Vec<Node>) -> Node {
        Node::Logic {
            op: LogicOp::And,
            children,
        }
    }

    pub fn or(children: Vec<Node>) -> Node {
        Node::Logic {
            op: LogicOp::Or,
            children,
        }
    }

    fn collect_leaves(&self, out: &mut Vec<LeafRef>) {
        match self {
            Node::Leaf {
                measurement,
                direction,
            } => out.push(LeafRef {
                measurement: *measurement,
                direction: *direction,
            }),
            Node::Logic { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    /// AND at the root whose children are leaves or ORs of leaves.
    pub fn is_cnf(&self) -> bool {
        let is_leaf = |n: &Node| matches!(n, Node::Leaf { .. });
        match self {
            Node::Logic {
                op: LogicOp::And,
                children,
            } => children.iter().all(|c| match c {
                Node::Leaf { .. } => true,
                Node::Logic {
                    op: LogicOp::Or,
                    children,
                } => children.iter().all(is_leaf),
                _ => false,
            }),
            _ => false,
        }
    }
}

/// Per-measurement threshold vector.
pub type ThetaVector = Vec<f64>;

/// A validated expert rule set for one target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub name: String,
    #[serde(default)]
    pub cnf: bool,
    pub root: Node,
    pub measurements: Vec<Measurement>,
    /// Expert thresholds, indexed by measurement id.
    pub theta: ThetaVector,
    /// Thresholds excluded from optimization.
    #[serde(default)]
    pub frozen: Vec<bool>,
}

impl RuleSet {
    pub fn num_measurements(&self) -> usize {
        self.measurements.len()
    }

    pub fn leaves(&self) -> Vec<LeafRef> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    /// Schema-independent consistency checks.
    pub fn check(&mut self) -> Result<()> {
        let k = self.measurements.len();
        if self.frozen.is_empty() {
            self.frozen = vec![false; k];
        }
        for (i, m) in self.measurements.iter().enumerate() {
            if self.measurements[..i].iter().any(|o| o.id == m.id) {
                return Err(DelError::Rule(format!("duplicate measurement id m{}", m.id)));
            }
        }
        self.measurements.sort_by_key(|m| m.id);
        for (i, m) in self.measurements.iter().enumerate() {
            if m.id != i {
                return Err(DelError::Rule(format!(
                    "measurement ids must be contiguous from m0; m{i} is missing"
                )));
            }
            match (m.aggregation, &m.target_column) {
                (Aggregation::Max, None) => {
                    return Err(DelError::Rule(format!("max measurement m{i} needs a target column")))
                }
                (Aggregation::Count, Some(_)) => {
                    return Err(DelError::Rule(format!("count measurement m{i} takes no target column")))
                }
                _ => {}
            }
        }
        if self.theta.len() != k || self.frozen.len() != k {
            return Err(DelError::Rule(format!(
                "{k} measurements but {} thresholds and {} frozen flags",
                self.theta.len(),
                self.frozen.len()
            )));
        }
        if let Some(i) = self.theta.iter().position(|t| !t.is_finite()) {
            return Err(DelError::Rule(format!("threshold of m{i} is not finite")));
        }
        check_node(&self.root, k)?;
        let leaves = self.leaves();
        for id in 0..k {
            if !leaves.iter().any(|l| l.measurement == id) {
                return Err(DelError::Rule(format!(
                    "measurement m{id} is not used by any leaf"
                )));
            }
        }
        if self.cnf && !self.root.is_cnf() {
            return Err(DelError::Rule(format!(
                "rule {} is flagged cnf but is not an AND of leaves and ORs of leaves",
                self.name
            )));
        }
        Ok(())
    }

    /// Checks every column reference against `schema`.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        for m in &self.measurements {
            if let Some(col) = &m.target_column {
                match schema.column(col) {
                    Some((_, ColumnKind::Numeric)) => {}
                    Some(_) => {
                        return Err(DelError::Schema(format!(
                            "m{}: max target column {col:?} is not numeric",
                            m.id
                        )))
                    }
                    None => {
                        return Err(DelError::Schema(format!(
                            "m{}: unknown column {col:?}",
                            m.id
                        )))
                    }
                }
            }
            for p in &m.predicates {
                let Some((_, kind)) = schema.column(&p.column) else {
                    return Err(DelError::Schema(format!(
                        "m{}: unknown column {:?}",
                        m.id, p.column
                    )));
                };
                match (kind, p.comparison, &p.value) {
                    (ColumnKind::Categorical, Comparison::Equals, Literal::Str(_)) => {}
                    (ColumnKind::Categorical, Comparison::Equals, Literal::Num(_)) => {
                        return Err(DelError::Schema(format!(
                            "m{}: categorical column {:?} compared with a number",
                            m.id, p.column
                        )))
                    }
                    (ColumnKind::Categorical, cmp, _) => {
                        return Err(DelError::Schema(format!(
                            "m{}: `{}` is not allowed on categorical column {:?}",
                            m.id,
                            cmp.symbol(),
                            p.column
                        )))
                    }
                    (ColumnKind::Numeric, _, Literal::Num(_)) => {}
                    (ColumnKind::Numeric, _, Literal::Str(_)) => {
                        return Err(DelError::Schema(format!(
                            "m{}: numeric column {:?} compared with a string",
                            m.id, p.column
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Unfrozen measurement ids, in order.
    pub fn trainable(&self) -> Vec<usize> {
        (0..self.measurements.len()).filter(|&i| !self.frozen[i]).collect()
    }
}

fn check_node(node: &Node, k: usize) -> Result<()> {
    match node {
        Node::Leaf { measurement, .. } if *measurement >= k => {
            Err(DelError::Rule(format!("unknown measurement m{measurement}")))
        }
        Node::Leaf { .. } => Ok(()),
        Node::Logic { op, children } => {
            if children.is_empty() {
                let name = match op {
                    LogicOp::And => "and",
                    LogicOp::Or => "or",
                };
                return Err(DelError::Rule(format!("empty `{name}` node")));
            }
            children.iter().try_for_each(|c| check_node(c, k))
        }
    }
}
