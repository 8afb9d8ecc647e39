use serde::{Deserialize, Serialize};

use super::CompiledRuleNet;
use crate::measure::Label;
use crate::rule_dsl::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafExplanation {
    pub leaf: usize,
    pub measurement: usize,
    pub direction: Direction,
    pub f: f64,
    pub theta: f64,
    /// Violation-positive smooth score.
    pub score: f64,
    pub violated: bool,
}

/// Human-facing account of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub predicted: Label,
    pub output: f64,
    pub leaves: Vec<LeafExplanation>,
    pub argmin_leaves: Vec<usize>,
    pub critical_rows: Vec<usize>,
}

/// Explains the prediction for measurement values `f` (already masked)
/// with `touched` rows per measurement.
pub fn explain(net: &CompiledRuleNet, f: &[f64], touched: &[Vec<usize>]) -> Explanation {
    let trace = net.forward(f, touched);
    let leaves = net
        .leaves()
        .iter()
        .enumerate()
        .map(|(i, l)| LeafExplanation {
            leaf: i,
            measurement: l.measurement,
            direction: l.direction,
            f: f[l.measurement],
            theta: net.theta[l.measurement],
            score: trace.leaf_scores[i],
            violated: !l.direction.holds(f[l.measurement], net.theta[l.measurement]),
        })
        .collect();
    Explanation {
        predicted: trace.predicted(),
        output: trace.output,
        leaves,
        argmin_leaves: trace.argmin_leaves.clone(),
        critical_rows: trace.critical_rows.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule_dsl::parse_ruleset;
    use crate::rule_net::RuleNetConfig;

    fn net() -> CompiledRuleNet {
        let rs = parse_ruleset(
            r#"rule R cnf { and { leaf m0 below 3 leaf m1 below 2 } }
               measure m0 = count measure m1 = count"#,
        )
        .unwrap();
        CompiledRuleNet::new(&rs, vec![5.0, 5.0], RuleNetConfig::default()).unwrap()
    }

    #[test]
    fn complying_sample_without_touched_rows() {
        let e = explain(&net(), &[0.0, 0.0], &[vec![], vec![]]);
        assert_eq!(e.predicted, Label::Negative);
        assert!(e.critical_rows.is_empty());
        assert!(e.leaves.iter().all(|l| !l.violated));
    }

    #[test]
    fn failing_sample_traces_most_violated_leaf() {
        let e = explain(&net(), &[4.0, 6.0], &[vec![0, 1, 2, 3], vec![4, 5, 6, 7, 8, 9]]);
        assert_eq!(e.predicted, Label::Positive);
        assert_eq!(e.argmin_leaves, vec![1]);
        assert_eq!(e.critical_rows, vec![4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn explanation_round_trips_through_json() {
        let e = explain(&net(), &[4.0, 1.0], &[vec![0, 1], vec![2]]);
        let line = serde_json::to_string(&e).unwrap();
        let back: Explanation = serde_json::from_str(&line).unwrap();
        assert_eq!(back, e);
    }
}
