//! Synthetic inspection data with planted thresholds and injected noise rows,
//! plus the raw-rule baseline.

mod baseline;

pub use baseline::{br_classify, br_predict};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DelError, Result};
use crate::measure::{
    Column, ColumnKind, Dataset, Label, MaskedSample, MeasureSet, Sample, Schema, Value,
};
use crate::numerics::RngStream;
use crate::rule_dsl::{
    classify_boolean, parse_ruleset, Aggregation, Comparison, Direction, Literal, RuleSet,
};
use crate::rule_net::{CompiledRuleNet, RuleNetConfig};

/// Rules of the synthetic inspection task, carrying the expert thresholds.
pub const SYNTHETIC_RULES: &str = r#"# Synthetic surface inspection: a part fails when any clause is violated.
rule inspection cnf {
  and {
    leaf m0 below 1.5
    leaf m1 below 2.0
    or { leaf m2 below 1.1 leaf m3 above 0.8 }
  }
}
measure m0 = count where type == "defect"
measure m1 = max(length) where type == "scratch"
measure m2 = count where type == "spot"
measure m3 = max(intensity) where type == "spot"
"#;

/// Categories that never match a measurement.
const FILLER_CATEGORY: &str = "plain";

pub fn synthetic_schema() -> Schema {
    let num = |name: &str| Column {
        name: name.into(),
        kind: ColumnKind::Numeric,
    };
    Schema::new(
        vec![
            num("position"),
            Column {
                name: "type".into(),
                kind: ColumnKind::Categorical,
            },
            num("length"),
            num("intensity"),
            num("contrast"),
        ],
        2,
    )
    .expect("static schema is valid")
}

pub fn synthetic_rules() -> RuleSet {
    parse_ruleset(SYNTHETIC_RULES).expect("static rules parse")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Gen,
    Spe,
}

impl std::str::FromStr for Preset {
    type Err = DelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gen" => Ok(Preset::Gen),
            "spe" => Ok(Preset::Spe),
            other => Err(DelError::Config(format!("unknown preset {other:?} (expected gen or spe)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub positive_fraction: f64,
    /// Thresholds that define the labels.
    pub true_theta: Vec<f64>,
    /// Thresholds written to the emitted rule file.
    pub expert_theta: Vec<f64>,
    /// Per-measurement value range `(lo, hi)`.
    pub value_ranges: Vec<(f64, f64)>,
    /// Clean values stay at least this far from the planted threshold.
    pub margins: Vec<f64>,
    /// Bounds on the number of clean rows, inclusive.
    pub seq_length_range: (usize, usize),
    /// Probability that a sample receives spurious rows.
    pub noise_row_rate: f64,
    pub max_noise_rows: usize,
    pub label_noise_rate: f64,
    /// Numeric column whose distribution separates clean from spurious rows.
    pub marker_column: Option<String>,
    pub seed: u64,
}

const GEN_TRUE_THETA: [f64; 4] = [4.5, 5.0, 3.5, 0.5];
const VALUE_RANGES: [(f64, f64); 4] = [(0.0, 10.0), (0.0, 10.0), (0.0, 8.0), (0.0, 1.0)];
const MARGINS: [f64; 4] = [1.0, 1.0, 1.0, 0.2];

/// Moves each threshold toward the stricter side by `fraction` of its range.
pub fn stricter_theta(rules: &RuleSet, theta: &[f64], ranges: &[(f64, f64)], fraction: f64) -> Vec<f64> {
    let dirs = measurement_directions(rules).unwrap_or_default();
    theta
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let sign = dirs.get(k).copied().flatten().map_or(1.0, Direction::sign);
            t - sign * fraction * (ranges[k].1 - ranges[k].0)
        })
        .collect()
}

impl GeneratorConfig {
    /// `gen`: large and imbalanced; `spe`: smaller, balanced-ish, slightly
    /// stricter planted rules and less noise.
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let rules = synthetic_rules();
        let ranges = VALUE_RANGES.to_vec();
        let gen_theta = GEN_TRUE_THETA.to_vec();
        let expert_theta = stricter_theta(&rules, &gen_theta, &ranges, 0.3);
        match preset {
            Preset::Gen => Self {
                n_samples: 6766,
                positive_fraction: 182.0 / 6766.0,
                true_theta: gen_theta,
                expert_theta,
                value_ranges: ranges,
                margins: MARGINS.to_vec(),
                seq_length_range: (8, 24),
                noise_row_rate: 0.5,
                max_noise_rows: 3,
                label_noise_rate: 0.002,
                marker_column: Some("contrast".into()),
                seed,
            },
            Preset::Spe => {
                let shifted: Vec<f64> = gen_theta
                    .iter()
                    .zip(stricter_theta(&rules, &gen_theta, &ranges, 1.0))
                    .zip(&MARGINS)
                    .map(|((&t, strict), &m)| {
                        // Shift by a fifth of the margin toward the stricter side.
                        let dir = (t - strict).signum();
                        t - dir * 0.2 * m
                    })
                    .collect();
                Self {
                    n_samples: 2210,
                    positive_fraction: 838.0 / 2210.0,
                    true_theta: shifted,
                    expert_theta,
                    value_ranges: ranges,
                    margins: MARGINS.to_vec(),
                    seq_length_range: (8, 24),
                    noise_row_rate: 0.3,
                    max_noise_rows: 3,
                    label_noise_rate: 0.002,
                    marker_column: Some("contrast".into()),
                    seed,
                }
            }
        }
    }

    /// Same distribution without spurious rows or label flips.
    pub fn noise_free(mut self) -> Self {
        self.noise_row_rate = 0.0;
        self.label_noise_rate = 0.0;
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let probs = [
            ("positive_fraction", self.positive_fraction),
            ("noise_row_rate", self.noise_row_rate),
            ("label_noise_rate", self.label_noise_rate),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(DelError::Config(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        for (name, len) in [
            ("true_theta", self.true_theta.len()),
            ("expert_theta", self.expert_theta.len()),
            ("value_ranges", self.value_ranges.len()),
            ("margins", self.margins.len()),
        ] {
            if len != k {
                return Err(DelError::Config(format!("{name} has {len} entries for {k} measurements")));
            }
        }
        if self.seq_length_range.0 > self.seq_length_range.1 {
            return Err(DelError::Config("seq_length_range is reversed".into()));
        }
        Ok(())
    }
}

fn measurement_directions(rules: &RuleSet) -> Result<Vec<Option<Direction>>> {
    let mut dirs = vec![None; rules.num_measurements()];
    for leaf in rules.leaves() {
        match dirs[leaf.measurement] {
            Some(d) if d != leaf.direction => {
                return Err(DelError::Infeasible {
                    measurement: leaf.measurement,
                    reason: "used with both directions".into(),
                })
            }
            _ => dirs[leaf.measurement] = Some(leaf.direction),
        }
    }
    Ok(dirs)
}

/// What the generator needs to know about one measurement.
#[derive(Debug, Clone)]
struct Plan {
    aggregation: Aggregation,
    category: String,
    target: Option<usize>,
    direction: Direction,
    theta: f64,
    range: (f64, f64),
    margin: f64,
}

impl Plan {
    /// Value range for `violate`, or `None` if empty.
    fn side(&self, violate: bool) -> Option<(f64, f64)> {
        let lower = (self.range.0, self.theta - self.margin);
        let upper = (self.theta + self.margin, self.range.1);
        let below_side = match self.direction {
            Direction::Below => !violate,
            Direction::Above => violate,
        };
        let (a, b) = if below_side { lower } else { upper };
        match self.aggregation {
            Aggregation::Count => {
                let (a, b) = (a.max(0.0).ceil(), b.floor());
                (a <= b).then_some((a, b))
            }
            Aggregation::Max => (a <= b).then_some((a, b)),
        }
    }

    fn on_side(&self, f: f64, violate: bool) -> bool {
        self.side(violate).is_some_and(|(a, b)| f >= a && f <= b)
    }

    fn draw(&self, violate: bool, rng: &mut RngStream) -> f64 {
        let (a, b) = self.side(violate).expect("checked feasible");
        match self.aggregation {
            Aggregation::Count => rng.int_inclusive(a as i64, b as i64) as f64,
            Aggregation::Max => rng.uniform_range(a, b),
        }
    }
}

struct Layout {
    plans: Vec<Plan>,
    type_col: usize,
    position_col: usize,
    marker_col: Option<usize>,
    /// Per numeric column, the range for unconstrained values.
    column_ranges: Vec<(f64, f64)>,
}

fn layout(cfg: &GeneratorConfig, schema: &Schema, rules: &RuleSet) -> Result<Layout> {
    let k = rules.num_measurements();
    cfg.validate(k)?;
    let dirs = measurement_directions(rules)?;
    let mut type_col = None;
    let mut plans = Vec::with_capacity(k);
    for (i, m) in rules.measurements.iter().enumerate() {
        let unsupported = || DelError::Infeasible {
            measurement: i,
            reason: "the generator supports exactly one categorical equality predicate".into(),
        };
        let [p] = m.predicates.as_slice() else {
            return Err(unsupported());
        };
        let (col, kind) = schema
            .column(&p.column)
            .ok_or_else(|| DelError::Schema(format!("unknown column {:?}", p.column)))?;
        let (Comparison::Equals, Literal::Str(cat), ColumnKind::Categorical) = (p.comparison, &p.value, kind) else {
            return Err(unsupported());
        };
        if type_col.is_some_and(|c| c != col) {
            return Err(unsupported());
        }
        type_col = Some(col);
        if cat == FILLER_CATEGORY {
            return Err(DelError::Infeasible {
                measurement: i,
                reason: format!("category {FILLER_CATEGORY:?} is reserved for filler rows"),
            });
        }
        let target = match &m.target_column {
            Some(c) => Some(schema.column(c).map(|(idx, _)| idx).ok_or_else(|| {
                DelError::Schema(format!("unknown column {c:?}"))
            })?),
            None => None,
        };
        let plan = Plan {
            aggregation: m.aggregation,
            category: cat.clone(),
            target,
            direction: dirs[i].ok_or_else(|| DelError::Infeasible {
                measurement: i,
                reason: "not referenced by any leaf".into(),
            })?,
            theta: cfg.true_theta[i],
            range: cfg.value_ranges[i],
            margin: cfg.margins[i],
        };
        for violate in [false, true] {
            if plan.side(violate).is_none() {
                return Err(DelError::Infeasible {
                    measurement: i,
                    reason: format!(
                        "no {} values in {:?} at least {} from threshold {}",
                        if violate { "violating" } else { "complying" },
                        plan.range,
                        plan.margin,
                        plan.theta
                    ),
                });
            }
        }
        plans.push(plan);
    }
    for (i, a) in plans.iter().enumerate() {
        for b in &plans[..i] {
            if a.category == b.category && a.aggregation == b.aggregation && a.target == b.target {
                return Err(DelError::Infeasible {
                    measurement: i,
                    reason: "duplicates another measurement on the same rows".into(),
                });
            }
        }
    }
    let mut column_ranges = vec![(0.0, 1.0); schema.columns.len()];
    for p in &plans {
        if let Some(t) = p.target {
            column_ranges[t] = p.range;
        }
    }
    let marker_col = match &cfg.marker_column {
        Some(name) => Some(
            schema
                .column(name)
                .filter(|(_, kind)| *kind == ColumnKind::Numeric)
                .ok_or_else(|| DelError::Schema(format!("marker column {name:?} is not numeric")))?
                .0,
        ),
        None => None,
    };
    Ok(Layout {
        plans,
        type_col: type_col.ok_or_else(|| DelError::Config("rule set has no measurements".into()))?,
        position_col: schema.position_index(),
        marker_col,
        column_ranges,
    })
}

/// A generated dataset and where the spurious rows went.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub dataset: Dataset,
    /// Indices of injected rows, per sample.
    pub noise_rows: Vec<Vec<usize>>,
    /// Whether the label was flipped, per sample.
    pub flipped: Vec<bool>,
    /// Labels before flipping (the planted truth on clean rows).
    pub clean_labels: Vec<Label>,
}

const MAX_ATTEMPTS: usize = 10_000;

/// Generates `cfg.n_samples` samples whose clean rows the true thresholds
/// classify exactly as labeled, with measurement values kept at least the
/// margin away from each threshold. Sample `i` uses the stream
/// `RngStream::new(cfg.seed).split(i)`.
pub fn generate(cfg: &GeneratorConfig, schema: &Schema, rules: &RuleSet) -> Result<Synthesis> {
    let lay = layout(cfg, schema, rules)?;
    let measures = MeasureSet::for_rules(rules, schema)?;
    let z: Vec<f64> = cfg.value_ranges.iter().map(|(a, b)| (b - a).max(1e-9)).collect();
    let mut truth = rules.clone();
    truth.theta = cfg.true_theta.clone();
    let net = CompiledRuleNet::new(&truth, z, RuleNetConfig::default())?;
    let root = RngStream::new(cfg.seed);
    let out: Vec<(Sample, Vec<usize>, bool, Label)> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.split(i as u64);
            generate_one(cfg, schema, &truth, &measures, &net, &lay, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut samples = Vec::with_capacity(out.len());
    let mut noise_rows = Vec::with_capacity(out.len());
    let mut flipped = Vec::with_capacity(out.len());
    let mut clean_labels = Vec::with_capacity(out.len());
    for (s, n, f, l) in out {
        samples.push(s);
        noise_rows.push(n);
        flipped.push(f);
        clean_labels.push(l);
    }
    Ok(Synthesis {
        dataset: Dataset::new(schema.clone(), samples)?,
        noise_rows,
        flipped,
        clean_labels,
    })
}

/// Per-measurement violation pattern whose crisp classification is `label`.
fn draw_sides(truth: &RuleSet, lay: &Layout, label: Label, rng: &mut RngStream) -> Result<Vec<bool>> {
    let p = if label == Label::Positive { 0.4 } else { 0.15 };
    for _ in 0..MAX_ATTEMPTS {
        let sides: Vec<bool> = lay.plans.iter().map(|_| rng.bernoulli(p)).collect();
        let rep: Vec<f64> = lay
            .plans
            .iter()
            .zip(&sides)
            .map(|(pl, &v)| {
                let s = if v { 1.0 } else { -1.0 };
                pl.theta + s * pl.direction.sign() * pl.margin
            })
            .collect();
        if classify_boolean(truth, &truth.theta, &rep).label == label {
            return Ok(sides);
        }
    }
    Err(DelError::Infeasible {
        measurement: 0,
        reason: format!("no violation pattern yields label {label:?}"),
    })
}

fn generate_one(
    cfg: &GeneratorConfig,
    schema: &Schema,
    truth: &RuleSet,
    measures: &MeasureSet,
    net: &CompiledRuleNet,
    lay: &Layout,
    rng: &mut RngStream,
) -> Result<(Sample, Vec<usize>, bool, Label)> {
    let label = if rng.bernoulli(cfg.positive_fraction) {
        Label::Positive
    } else {
        Label::Negative
    };
    let mut last_bad = 0;
    for _ in 0..MAX_ATTEMPTS {
        let sides = draw_sides(truth, lay, label, rng)?;
        let Some(rows) = realize(cfg, schema, lay, &sides, rng) else {
            continue;
        };
        let clean = Sample {
            x_seq: rows,
            x_base: (0..schema.base_len).map(|_| rng.normal()).collect(),
            y: label,
            y_feat: Vec::new(),
        };
        let (f, touched) = measures.evaluate_all(MaskedSample::unmasked(&clean))?;
        if let Some(k) = (0..f.len()).find(|&k| !lay.plans[k].on_side(f[k], sides[k])) {
            last_bad = k;
            continue;
        }
        debug_assert_eq!(classify_boolean(truth, &truth.theta, &f).label, label);
        let critical = if label == Label::Positive {
            net.forward(&f, &touched).critical_rows
        } else {
            Vec::new()
        };
        return Ok(finish(cfg, schema, lay, clean, critical, rng));
    }
    Err(DelError::Infeasible {
        measurement: last_bad,
        reason: "could not realize rows matching the drawn values".into(),
    })
}

fn numeric_cell(lay: &Layout, col: usize, rng: &mut RngStream) -> f64 {
    let (a, b) = lay.column_ranges[col];
    rng.uniform_range(a, b)
}

/// Per category: the planned row count and the planned maxima `(plan, value)`.
type CategoryPlan = (Option<usize>, Vec<(usize, f64)>);

/// Builds the clean rows (without positions) for one violation pattern.
fn realize(
    cfg: &GeneratorConfig,
    schema: &Schema,
    lay: &Layout,
    sides: &[bool],
    rng: &mut RngStream,
) -> Option<Vec<Vec<Value>>> {
    let mut by_cat: BTreeMap<&str, CategoryPlan> = BTreeMap::new();
    for (k, p) in lay.plans.iter().enumerate() {
        let v = p.draw(sides[k], rng);
        let entry = by_cat.entry(p.category.as_str()).or_default();
        match p.aggregation {
            Aggregation::Count => entry.0 = Some(v as usize),
            Aggregation::Max => entry.1.push((k, v)),
        }
    }
    let mut rows = Vec::new();
    for (cat, (count, maxes)) in &by_cat {
        let n = count.unwrap_or_else(|| rng.int_inclusive(0, 3) as usize);
        if n == 0 {
            let ok = maxes
                .iter()
                .all(|&(k, _)| lay.plans[k].on_side(schema.empty_max_default, sides[k]));
            if !ok {
                return None;
            }
            continue;
        }
        for r in 0..n {
            let mut row = base_row(schema, lay, cat, rng);
            for &(k, v) in maxes {
                let col = lay.plans[k].target.expect("max has a target");
                let lo = lay.plans[k].range.0;
                row[col] = Value::Num(if r == 0 { v } else { rng.uniform_range(lo, v) });
            }
            rows.push(row);
        }
    }
    let (lo, hi) = cfg.seq_length_range;
    let target_len = rng.int_inclusive(lo as i64, hi as i64) as usize;
    while rows.len() < target_len {
        rows.push(base_row(schema, lay, FILLER_CATEGORY, rng));
    }
    rng.shuffle(&mut rows);
    Some(rows)
}

fn base_row(schema: &Schema, lay: &Layout, cat: &str, rng: &mut RngStream) -> Vec<Value> {
    schema
        .columns
        .iter()
        .enumerate()
        .map(|(c, col)| {
            if c == lay.type_col {
                Value::Cat(cat.to_string())
            } else if Some(c) == lay.marker_col {
                Value::Num(1.0 + 0.3 * rng.normal())
            } else {
                match col.kind {
                    ColumnKind::Numeric => Value::Num(numeric_cell(lay, c, rng)),
                    ColumnKind::Categorical => Value::Cat(FILLER_CATEGORY.into()),
                }
            }
        })
        .collect()
}

/// A spurious row that pushes one below-direction measurement toward violation.
fn noise_row(schema: &Schema, lay: &Layout, rng: &mut RngStream) -> Option<Vec<Value>> {
    let inflatable: Vec<usize> = (0..lay.plans.len())
        .filter(|&k| lay.plans[k].direction == Direction::Below)
        .collect();
    if inflatable.is_empty() {
        return None;
    }
    let p = &lay.plans[inflatable[rng.below(inflatable.len())]];
    let mut row = base_row(schema, lay, &p.category, rng);
    if let Some(t) = p.target {
        let (a, b) = (p.theta + p.margin, p.range.1);
        row[t] = Value::Num(if a < b { rng.uniform_range(a, b) } else { b });
    }
    if let Some(m) = lay.marker_col {
        row[m] = Value::Num(-1.0 + 0.3 * rng.normal());
    }
    Some(row)
}

/// Assigns positions, injects noise rows near clean rows, maps critical
/// rows into the final order, and applies label noise.
fn finish(
    cfg: &GeneratorConfig,
    schema: &Schema,
    lay: &Layout,
    clean: Sample,
    critical: Vec<usize>,
    rng: &mut RngStream,
) -> (Sample, Vec<usize>, bool, Label) {
    let thr = if schema.distance_threshold.is_finite() {
        schema.distance_threshold
    } else {
        2.0
    };
    let clean_label = clean.y;
    let mut rows: Vec<(f64, Vec<Value>, bool, bool)> = Vec::with_capacity(clean.len());
    let mut pos = 0.0;
    for (r, mut row) in clean.x_seq.into_iter().enumerate() {
        pos += rng.uniform_range(0.3, 0.6 * thr);
        row[lay.position_col] = Value::Num(pos);
        rows.push((pos, row, false, critical.binary_search(&r).is_ok()));
    }
    if cfg.noise_row_rate > 0.0 && rng.bernoulli(cfg.noise_row_rate) {
        let count = rng.int_inclusive(1, cfg.max_noise_rows.max(1) as i64) as usize;
        for _ in 0..count {
            let anchor = if rows.is_empty() {
                0.0
            } else {
                rows[rng.below(rows.len())].0
            };
            if let Some(mut row) = noise_row(schema, lay, rng) {
                let p = anchor + rng.uniform_range(-0.9, 0.9) * thr;
                row[lay.position_col] = Value::Num(p);
                rows.push((p, row, true, false));
            }
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let noise: Vec<usize> = rows.iter().enumerate().filter(|(_, r)| r.2).map(|(i, _)| i).collect();
    let mut y_feat: Vec<usize> = rows.iter().enumerate().filter(|(_, r)| r.3).map(|(i, _)| i).collect();
    let mut y = clean_label;
    let flip = cfg.label_noise_rate > 0.0 && rng.bernoulli(cfg.label_noise_rate);
    if flip {
        y = y.flipped();
        y_feat.clear();
    }
    let sample = Sample {
        x_seq: rows.into_iter().map(|r| r.1).collect(),
        x_base: clean.x_base,
        y,
        y_feat,
    };
    (sample, noise, flip, clean_label)
}

/// The synthetic rule set with its thresholds replaced by `cfg.expert_theta`.
pub fn expert_rules(cfg: &GeneratorConfig) -> RuleSet {
    let mut r = synthetic_rules();
    r.theta = cfg.expert_theta.clone();
    r
}
