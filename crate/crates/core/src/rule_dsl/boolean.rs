use super::ast::{LogicOp, Node, RuleSet};
use crate::error::Result;
use crate::measure::{Label, MaskedSample, MeasureSet, Sample};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BooleanOutcome {
    /// `Negative` when the sample complies with every constraint.
    pub label: Label,
    /// Leaf ids (depth-first order) responsible for the failure.
    pub violated: Vec<usize>,
}

impl BooleanOutcome {
    pub fn complies(&self) -> bool {
        self.label == Label::Negative
    }
}

/// Crisp rule evaluation on precomputed measurement values `f`.
///
/// A failing AND reports the violated leaves of its failing children; a
/// failing OR reports those of all its children.
pub fn classify_boolean(rules: &RuleSet, theta: &[f64], f: &[f64]) -> BooleanOutcome {
    let mut next_leaf = 0;
    let mut violated = Vec::new();
    let holds = eval(&rules.root, theta, f, &mut next_leaf, &mut violated);
    BooleanOutcome {
        label: if holds { Label::Negative } else { Label::Positive },
        violated,
    }
}

/// Evaluates the measurements on the raw sample, then classifies.
pub fn classify_sample(
    rules: &RuleSet,
    measures: &MeasureSet,
    theta: &[f64],
    sample: &Sample,
) -> Result<BooleanOutcome> {
    let (f, _) = measures.evaluate_all(MaskedSample::unmasked(sample))?;
    Ok(classify_boolean(rules, theta, &f))
}

fn eval(
    node: &Node,
    theta: &[f64],
    f: &[f64],
    next_leaf: &mut usize,
    violated: &mut Vec<usize>,
) -> bool {
    match node {
        Node::Leaf {
            measurement,
            direction,
        } => {
            let id = *next_leaf;
            *next_leaf += 1;
            let ok = direction.holds(f[*measurement], theta[*measurement]);
            if !ok {
                violated.push(id);
            }
            ok
        }
        Node::Logic { op, children } => {
            let mark = violated.len();
            let results: Vec<bool> = children
                .iter()
                .map(|c| eval(c, theta, f, next_leaf, violated))
                .collect();
            let holds = match op {
                LogicOp::And => results.iter().all(|&r| r),
                LogicOp::Or => results.iter().any(|&r| r),
            };
            if holds {
                violated.truncate(mark);
            }
            holds
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule_dsl::parse_ruleset;

    fn single() -> RuleSet {
        parse_ruleset("rule R { and { leaf m0 below 5 } } measure m0 = count").unwrap()
    }

    #[test]
    fn below_threshold_complies() {
        let o = classify_boolean(&single(), &[5.0], &[3.0]);
        assert!(o.complies());
        assert!(o.violated.is_empty());
    }

    #[test]
    fn above_threshold_fails() {
        let o = classify_boolean(&single(), &[5.0], &[7.0]);
        assert_eq!(o.label, Label::Positive);
        assert_eq!(o.violated, vec![0]);
    }

    #[test]
    fn boundary_counts_as_violation() {
        assert_eq!(classify_boolean(&single(), &[5.0], &[5.0]).label, Label::Positive);
    }

    #[test]
    fn conjunction_reports_only_the_failing_leaf() {
        let rs = parse_ruleset(
            "rule R { and { leaf m0 below 5 leaf m1 above 1 } } measure m0 = count measure m1 = count",
        )
        .unwrap();
        let o = classify_boolean(&rs, &rs.theta, &[2.0, 0.0]);
        assert_eq!(o.label, Label::Positive);
        assert_eq!(o.violated, vec![1]);
    }

    #[test]
    fn satisfied_or_clears_its_failed_leaves() {
        let rs = parse_ruleset(
            "rule R cnf { and { or { leaf m0 below 1 leaf m1 below 1 } leaf m2 below 1 } }
             measure m0 = count measure m1 = count measure m2 = count",
        )
        .unwrap();
        let o = classify_boolean(&rs, &rs.theta, &[5.0, 0.0, 0.0]);
        assert!(o.complies() && o.violated.is_empty());
        let o = classify_boolean(&rs, &rs.theta, &[5.0, 5.0, 0.0]);
        assert_eq!(o.violated, vec![0, 1]);
    }
}
