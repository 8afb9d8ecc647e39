use super::{CompiledRuleNet, ForwardTrace};
use crate::measure::Label;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub focal: f64,
    pub critical: f64,
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Focal loss `-alpha (1 - p_t)^gamma ln p_t` on the logit `logit`, where
/// `p_t` is the probability assigned to the true class. `alpha` scales the
/// whole term, so `gamma = 0, alpha = 1` is plain binary cross-entropy.
pub fn focal_loss(logit: f64, y: Label, gamma: f64, alpha: f64) -> f64 {
    let zt = logit * y.sign();
    let log_pt = -softplus(-zt);
    let one_minus = crate::numerics::sigmoid(-zt);
    -alpha * one_minus.powf(gamma) * log_pt
}

/// Derivative of [`focal_loss`] with respect to `logit`.
pub fn focal_loss_grad(logit: f64, y: Label, gamma: f64, alpha: f64) -> f64 {
    let zt = logit * y.sign();
    let q = crate::numerics::sigmoid(zt);
    let one_minus = crate::numerics::sigmoid(-zt);
    let log_q = -softplus(-zt);
    let d_zt = -alpha * (-gamma * one_minus.powf(gamma) * q * log_q + one_minus.powf(gamma + 1.0));
    d_zt * y.sign()
}

pub fn binary_cross_entropy(logit: f64, y: Label) -> f64 {
    softplus(-logit * y.sign())
}

/// Probability mass the responsibilities put on each row of `rows`:
/// every leaf spreads its responsibility uniformly over the rows its
/// measurement touched.
pub fn critical_row_distribution(net: &CompiledRuleNet, trace: &ForwardTrace, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|row| {
            net.leaves()
                .iter()
                .zip(&trace.responsibilities)
                .filter_map(|(leaf, r)| {
                    let t = &trace.touched[leaf.measurement];
                    t.binary_search(row).ok().map(|_| r / t.len() as f64)
                })
                .sum()
        })
        .collect()
}

/// Focal classification loss plus the critical-row cross-entropy, and the
/// gradient of their sum with respect to every threshold.
///
/// `touched` row lists must be sorted ascending. Min/max subgradients go to
/// the routed child; frozen thresholds receive zero gradient.
pub fn loss_and_grad(
    net: &CompiledRuleNet,
    f: &[f64],
    touched: &[Vec<usize>],
    y: Label,
    y_feat: &[usize],
) -> (LossBreakdown, Vec<f64>, ForwardTrace) {
    let cfg = net.config;
    let trace = net.forward(f, touched);
    let nl = net.leaves().len();
    let mut d_leaf = vec![0.0; nl];

    let logit = cfg.slope * trace.output;
    let focal = focal_loss(logit, y, cfg.focal_gamma, cfg.focal_alpha);
    let routed = trace.argmin_leaves[0];
    d_leaf[routed] += cfg.slope * focal_loss_grad(logit, y, cfg.focal_gamma, cfg.focal_alpha);

    let mut critical = 0.0;
    if cfg.critical_weight != 0.0 && !y_feat.is_empty() {
        let probs = critical_row_distribution(net, &trace, y_feat);
        let inv = cfg.critical_weight / y_feat.len() as f64;
        critical = -inv * probs.iter().map(|p| (p + cfg.ce_epsilon).ln()).sum::<f64>();

        // dL/dr_l
        let g: Vec<f64> = net
            .leaves()
            .iter()
            .map(|leaf| {
                let t = &trace.touched[leaf.measurement];
                if t.is_empty() {
                    return 0.0;
                }
                -inv * y_feat
                    .iter()
                    .zip(&probs)
                    .filter(|(row, _)| t.binary_search(row).is_ok())
                    .map(|(_, p)| 1.0 / (t.len() as f64 * (p + cfg.ce_epsilon)))
                    .sum::<f64>()
            })
            .collect();
        let r = &trace.responsibilities;
        let mean_g: f64 = r.iter().zip(&g).map(|(a, b)| a * b).sum();
        for j in 0..nl {
            let d_soft = r[j] / cfg.tau_soft * (g[j] - mean_g);
            d_leaf[trace.soft_source[j]] += d_soft;
        }
    }

    let mut grad = vec![0.0; net.num_measurements()];
    for (l, leaf) in net.leaves().iter().enumerate() {
        if d_leaf[l] == 0.0 {
            continue;
        }
        let m = leaf.measurement;
        let v = trace.leaf_scores[l];
        let dv_dtheta = -leaf.direction.sign() * (1.0 - v * v) / net.z[m];
        grad[m] += d_leaf[l] * dv_dtheta;
    }
    for (g, &frozen) in grad.iter_mut().zip(&net.frozen) {
        if frozen {
            *g = 0.0;
        }
    }
    (
        LossBreakdown {
            total: focal + critical,
            focal,
            critical,
        },
        grad,
        trace,
    )
}

/// Sum over the batch of compliance score times the compliance sign, i.e.
/// `sum(y * output)` in the violation-positive orientation. Larger is better.
pub fn batch_objective<'a>(
    net: &CompiledRuleNet,
    batch: impl IntoIterator<Item = (&'a [f64], Label)>,
) -> f64 {
    batch
        .into_iter()
        .map(|(f, y)| y.sign() * net.output(f))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule_dsl::parse_ruleset;
    use crate::rule_net::RuleNetConfig;

    #[test]
    fn focal_reduces_to_bce() {
        for &x in &[-4.0, -0.3, 0.0, 0.7, 5.0] {
            for y in [Label::Positive, Label::Negative] {
                let a = focal_loss(x, y, 0.0, 1.0);
                let b = binary_cross_entropy(x, y);
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn well_classified_focal_is_small() {
        let l = focal_loss(3.0 * 0.99, Label::Positive, 2.0, 0.25);
        assert!(l < 0.01, "{l}");
        let l = focal_loss(-3.0 * 0.99, Label::Negative, 2.0, 0.25);
        assert!(l < 0.01, "{l}");
    }

    #[test]
    fn focal_grad_matches_finite_difference() {
        for &x in &[-3.0, -0.5, 0.1, 2.0] {
            for y in [Label::Positive, Label::Negative] {
                let h = 1e-6;
                let fd = (focal_loss(x + h, y, 2.0, 0.25) - focal_loss(x - h, y, 2.0, 0.25)) / (2.0 * h);
                let an = focal_loss_grad(x, y, 2.0, 0.25);
                assert!((fd - an).abs() < 1e-7, "{fd} vs {an}");
            }
        }
    }

    fn and_net() -> CompiledRuleNet {
        let rs = parse_ruleset(
            "rule R { and { leaf m0 below 5 leaf m1 below 5 } } measure m0 = count measure m1 = count",
        )
        .unwrap();
        CompiledRuleNet::new(&rs, vec![10.0, 10.0], RuleNetConfig::default()).unwrap()
    }

    #[test]
    fn batch_objective_examples() {
        let n = and_net();
        let s = batch_objective(&n, [(&[-1e3, -1e3][..], Label::Negative)]);
        assert!((s - 1.0).abs() < 1e-9);
        let s = batch_objective(&n, [(&[1e3, 0.0][..], Label::Positive)]);
        assert!((s - 1.0).abs() < 1e-9);
        let s = batch_objective(&n, [(&[5.0, 5.0][..], Label::Positive)]);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn frozen_thresholds_get_no_gradient() {
        let mut n = and_net();
        n.frozen = vec![true, false];
        let touched = vec![vec![0, 1], vec![2]];
        let (_, g, _) = loss_and_grad(&n, &[7.0, 1.0], &touched, Label::Negative, &[]);
        assert_eq!(g[0], 0.0);
        let (_, g, _) = loss_and_grad(&n, &[1.0, 7.0], &touched, Label::Positive, &[0]);
        assert_eq!(g[0], 0.0);
        assert!(g[1] != 0.0);
    }

    #[test]
    fn critical_term_vanishes_without_labels_or_weight() {
        let mut n = and_net();
        let touched = vec![vec![0, 1], vec![2]];
        let (l, _, _) = loss_and_grad(&n, &[7.0, 1.0], &touched, Label::Positive, &[]);
        assert_eq!(l.critical, 0.0);
        n.config.critical_weight = 0.0;
        let (l, _, _) = loss_and_grad(&n, &[7.0, 1.0], &touched, Label::Positive, &[2]);
        assert_eq!(l.critical, 0.0);
        assert_eq!(l.total, l.focal);
    }
}
