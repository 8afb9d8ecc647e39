mod common;

use proptest::prelude::*;

use del_core::assess_net::{forward_mask, AssessModel, FeatureSpec};
use del_core::link_search::{greedy_search, SearchConfig};
use del_core::measure::{Label, MaskedSample, MeasureSet};
use del_core::numerics::{de_optimize, de_optimize_local, DEConfig, Matrix, RngStream};
use del_core::rule_dsl::{classify_boolean, parse_ruleset, to_dsl, Direction, LogicOp, Node};
use del_core::rule_net::{CompiledRuleNet, RuleNetConfig};
use del_core::synth::{generate, synthetic_rules, synthetic_schema, GeneratorConfig, Preset};

use common::{count_rules, random_assess_input, random_tree, row, sample, small_schema};

/// Direct recursive reading of the tree: a leaf complies when its
/// comparison holds, AND needs all children, OR any child.
fn complies(node: &Node, theta: &[f64], f: &[f64]) -> bool {
    match node {
        Node::Leaf { measurement, direction } => match direction {
            Direction::Below => f[*measurement] < theta[*measurement],
            Direction::Above => f[*measurement] > theta[*measurement],
        },
        Node::Logic { op: LogicOp::And, children } => children.iter().all(|c| complies(c, theta, f)),
        Node::Logic { op: LogicOp::Or, children } => children.iter().any(|c| complies(c, theta, f)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn printed_rules_parse_back_identically(seed in any::<u64>(), k in 1usize..7) {
        let mut rng = RngStream::new(seed);
        let root = random_tree(&mut rng, k, 3);
        let theta = (0..k).map(|_| rng.uniform_range(-50.0, 50.0)).collect();
        let mut rules = count_rules(root, theta);
        rules.frozen = (0..k).map(|_| rng.bernoulli(0.3)).collect();
        let back = parse_ruleset(&to_dsl(&rules)).unwrap();
        prop_assert_eq!(back, rules);
    }

    #[test]
    fn boolean_classifier_matches_direct_reading(seed in any::<u64>(), k in 1usize..7) {
        let mut rng = RngStream::new(seed);
        let root = random_tree(&mut rng, k, 3);
        let theta: Vec<f64> = (0..k).map(|_| rng.uniform_range(0.0, 10.0)).collect();
        let rules = count_rules(root, theta);
        let f: Vec<f64> = (0..k).map(|_| rng.below(11) as f64).collect();
        let want = if complies(&rules.root, &rules.theta, &f) { Label::Negative } else { Label::Positive };
        prop_assert_eq!(classify_boolean(&rules, &rules.theta, &f).label, want);
        let net = CompiledRuleNet::new(&rules, vec![1.0; k], RuleNetConfig::default()).unwrap();
        if f.iter().zip(&rules.theta).all(|(a, b)| a != b) {
            prop_assert_eq!(Label::from_sign(net.forward_hard(&f)), want);
        }
    }

    #[test]
    fn dropping_rows_never_raises_a_measurement(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let cfg = GeneratorConfig { n_samples: 5, ..GeneratorConfig::preset(Preset::Gen, seed) };
        let rules = synthetic_rules();
        let data = generate(&cfg, &synthetic_schema(), &rules).unwrap().dataset;
        let measures = MeasureSet::for_rules(&rules, &data.schema).unwrap();
        for s in &data.samples {
            let mask: Vec<f64> = (0..s.len()).map(|_| rng.uniform()).collect();
            let (full, _) = measures.evaluate_all(MaskedSample::unmasked(s)).unwrap();
            let (masked, _) = measures.evaluate_all(MaskedSample::new(s, &mask).unwrap()).unwrap();
            for (m, f) in masked.iter().zip(&full) {
                prop_assert!(m <= f);
            }
        }
    }

    #[test]
    fn assess_mask_is_permutation_equivariant(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = RngStream::new(seed);
        let x = random_assess_input(&mut rng, n, 4, 2);
        let w = del_core::assess_net::AssessWeights::init(4, 2, &mut rng);
        let perm = rng.permutation(n);
        let mut moved = Matrix::zeros(n, 4);
        for (i, &p) in perm.iter().enumerate() {
            moved.row_mut(p).copy_from_slice(x.features.row(i));
        }
        let a = forward_mask(&w, &x.graph, &x.features, &x.base).unwrap();
        let b = forward_mask(&w, &x.graph.permuted(&perm), &moved, &x.base).unwrap();
        for i in 0..n {
            prop_assert!((a[i] - b[perm[i]]).abs() < 1e-12);
        }
    }

    #[test]
    fn de_stays_in_bounds_and_never_gets_worse(seed in any::<u64>(), radius in 0.01f64..0.5) {
        let bounds = vec![(-2.0, 3.0), (0.0, 1.0), (-10.0, -5.0)];
        let cfg = DEConfig::for_bounds(bounds.clone(), seed);
        let mut seen_outside = false;
        let center = [0.5, 0.9, -6.0];
        let obj = |x: &[f64]| {
            if x.iter().zip(&bounds).any(|(v, (lo, hi))| v < lo || v > hi) {
                seen_outside = true;
            }
            x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>()
        };
        let r = de_optimize_local(obj, &cfg, 10, &center, radius).unwrap();
        prop_assert!(!seen_outside);
        prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        let start: f64 = center.iter().map(|v| (v - 0.3).powi(2)).sum();
        prop_assert!(r.value <= start);
    }
}

#[test]
fn de_finds_shifted_quadratic_minimum() {
    let cfg = DEConfig {
        population_size: 16,
        ..DEConfig::for_bounds(vec![(-10.0, 10.0)], 7)
    };
    let r = de_optimize(|x| (x[0] - 3.0).powi(2), &cfg, 100).unwrap();
    assert!((r.best[0] - 3.0).abs() < 0.01, "{:?}", r.best);
}

#[test]
fn assess_network_overfits_one_batch() {
    let schema = small_schema();
    let s = sample(
        (0..8).map(|i| row(i as f64, if i % 3 == 0 { "spot" } else { "plain" }, i as f64 * 0.7)).collect(),
        Label::Negative,
    );
    let spec = FeatureSpec::fit(&schema, [&s]);
    let mut model = AssessModel::new(spec, 1e-2, &mut RngStream::new(3));
    let input = model.input(&s, del_core::assess_net::sample_graph(&s, &schema));
    let target: Vec<f64> = (0..8).map(|i| if i % 3 == 0 { 0.0 } else { 1.0 }).collect();
    let mut loss = f64::INFINITY;
    for _ in 0..500 {
        loss = model.train_step(&[(&input, &target)]).unwrap();
    }
    assert!(loss < 1e-3, "loss {loss}");
    let mask = model.mask(&input).unwrap();
    for (m, t) in mask.iter().zip(&target) {
        assert_eq!(*m >= 0.5, *t >= 0.5);
    }
}

#[test]
fn generator_and_search_are_reproducible() {
    let cfg = GeneratorConfig { n_samples: 300, ..GeneratorConfig::preset(Preset::Spe, 11) };
    let rules = synthetic_rules();
    let a = generate(&cfg, &synthetic_schema(), &rules).unwrap();
    let b = generate(&cfg, &synthetic_schema(), &rules).unwrap();
    assert_eq!(a.dataset.samples, b.dataset.samples);
    assert_eq!(a.noise_rows, b.noise_rows);

    let measures = MeasureSet::for_rules(&rules, &a.dataset.schema).unwrap();
    let net = CompiledRuleNet::new(&rules, vec![2.0; 4], RuleNetConfig::default()).unwrap();
    let cfg = SearchConfig::default();
    for (i, s) in a.dataset.samples.iter().enumerate().take(40) {
        let index = measures.index(s).unwrap();
        let g = del_core::assess_net::sample_graph(s, &a.dataset.schema);
        let run = || greedy_search(&index, s.y.flipped(), &net, &g, &cfg, &mut RngStream::new(i as u64));
        let (x, y) = (run(), run());
        assert_eq!(x.mask, y.mask);
        assert_eq!(x.trace, y.trace);
        assert!(x.trace.evaluations <= cfg.max_evaluations());
        if let Some(m) = x.mask {
            assert!(m.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }
}
