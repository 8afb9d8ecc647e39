//! Shared fixtures for the benchmarks.

use del_core::assess_net::{sample_graph, AssessInput, AssessWeights, FeatureSpec, RowGraph};
use del_core::measure::{Dataset, MeasureSet, SampleIndex};
use del_core::numerics::RngStream;
use del_core::rule_dsl::RuleSet;
use del_core::rule_net::{normalizers, CompiledRuleNet, RuleNetConfig};
use del_core::synth::{expert_rules, generate, synthetic_rules, synthetic_schema, GeneratorConfig, Preset};

/// A small noisy dataset with everything precomputed for the kernels.
pub struct Fixture {
    pub dataset: Dataset,
    pub rules: RuleSet,
    pub measures: MeasureSet,
    pub net: CompiledRuleNet,
    pub indexes: Vec<SampleIndex>,
    pub graphs: Vec<RowGraph>,
    pub inputs: Vec<AssessInput>,
    pub weights: AssessWeights,
}

impl Fixture {
    pub fn new(n_samples: usize) -> Self {
        let cfg = GeneratorConfig {
            n_samples,
            ..GeneratorConfig::preset(Preset::Gen, 42)
        };
        let dataset = generate(&cfg, &synthetic_schema(), &synthetic_rules())
            .expect("preset generates")
            .dataset;
        let rules = expert_rules(&cfg);
        let measures = MeasureSet::for_rules(&rules, &dataset.schema).expect("rules fit schema");
        let indexes: Vec<SampleIndex> = dataset
            .samples
            .iter()
            .map(|s| measures.index(s).expect("valid sample"))
            .collect();
        let f: Vec<Vec<f64>> = indexes.iter().map(|i| i.values(None)).collect();
        let z = normalizers(rules.num_measurements(), f.iter().map(Vec::as_slice));
        let net = CompiledRuleNet::new(&rules, z, RuleNetConfig::default()).expect("valid net");
        let graphs: Vec<RowGraph> = dataset.samples.iter().map(|s| sample_graph(s, &dataset.schema)).collect();
        let spec = FeatureSpec::fit(&dataset.schema, dataset.samples.iter());
        let inputs = dataset
            .samples
            .iter()
            .zip(&graphs)
            .map(|(s, g)| AssessInput::new(s, &spec, g.clone()))
            .collect();
        let weights = AssessWeights::init(spec.width(), spec.base_len(), &mut RngStream::new(1));
        Self {
            dataset,
            rules,
            measures,
            net,
            indexes,
            graphs,
            inputs,
            weights,
        }
    }
}
