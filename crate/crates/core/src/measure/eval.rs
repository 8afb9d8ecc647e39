use super::sample::{MaskedSample, Sample, Schema, Value};
use crate::error::{DelError, Result};
use crate::rule_dsl::{Aggregation, Comparison, Literal, Measurement, RuleSet};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementResult {
    pub value: f64,
    /// Effective rows that satisfied every predicate, ascending.
    pub touched_rows: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Test {
    Eq(String),
    EqNum(f64),
    Lt(f64),
    Gt(f64),
}

#[derive(Debug, Clone)]
struct CompiledPredicate {
    column: usize,
    test: Test,
}

#[derive(Debug, Clone)]
struct CompiledMeasurement {
    aggregation: Aggregation,
    target: Option<usize>,
    predicates: Vec<CompiledPredicate>,
}

/// Measurements bound to column indices of a schema.
#[derive(Debug, Clone)]
pub struct MeasureSet {
    compiled: Vec<CompiledMeasurement>,
    empty_max_default: f64,
}

impl MeasureSet {
    pub fn compile(measurements: &[Measurement], schema: &Schema) -> Result<Self> {
        let column = |name: &str, id: usize| {
            schema
                .column(name)
                .map(|(i, _)| i)
                .ok_or_else(|| DelError::Schema(format!("m{id}: unknown column {name:?}")))
        };
        let mut compiled = Vec::with_capacity(measurements.len());
        for m in measurements {
            let target = match &m.target_column {
                Some(c) => {
                    let (i, kind) = schema
                        .column(c)
                        .ok_or_else(|| DelError::Schema(format!("m{}: unknown column {c:?}", m.id)))?;
                    if kind != super::ColumnKind::Numeric {
                        return Err(DelError::Schema(format!(
                            "m{}: target column {c:?} is not numeric",
                            m.id
                        )));
                    }
                    Some(i)
                }
                None if m.aggregation == Aggregation::Max => {
                    return Err(DelError::Schema(format!("m{}: max without target column", m.id)))
                }
                None => None,
            };
            let predicates = m
                .predicates
                .iter()
                .map(|p| {
                    let test = match (p.comparison, &p.value) {
                        (Comparison::Equals, Literal::Str(s)) => Test::Eq(s.clone()),
                        (Comparison::Equals, Literal::Num(v)) => Test::EqNum(*v),
                        (Comparison::LessThan, Literal::Num(v)) => Test::Lt(*v),
                        (Comparison::GreaterThan, Literal::Num(v)) => Test::Gt(*v),
                        (cmp, Literal::Str(_)) => {
                            return Err(DelError::Schema(format!(
                                "m{}: `{}` needs a numeric literal",
                                m.id,
                                cmp.symbol()
                            )))
                        }
                    };
                    Ok(CompiledPredicate {
                        column: column(&p.column, m.id)?,
                        test,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            compiled.push(CompiledMeasurement {
                aggregation: m.aggregation,
                target,
                predicates,
            });
        }
        Ok(Self {
            compiled,
            empty_max_default: schema.empty_max_default,
        })
    }

    /// Validates `rules` against `schema` and compiles its measurements.
    pub fn for_rules(rules: &RuleSet, schema: &Schema) -> Result<Self> {
        rules.validate(schema)?;
        Self::compile(&rules.measurements, schema)
    }

    pub fn len(&self) -> usize {
        self.compiled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compiled.is_empty()
    }

    fn matches(&self, k: usize, row: &[Value]) -> Result<bool> {
        for p in &self.compiled[k].predicates {
            let cell = row
                .get(p.column)
                .ok_or_else(|| DelError::Schema(format!("row lacks column {}", p.column)))?;
            let ok = match (&p.test, cell) {
                (Test::Eq(s), Value::Cat(v)) => v == s,
                (Test::EqNum(x), Value::Num(v)) => v == x,
                (Test::Lt(x), Value::Num(v)) => v < x,
                (Test::Gt(x), Value::Num(v)) => v > x,
                (_, other) => {
                    return Err(DelError::Schema(format!(
                        "value {other} has the wrong type for its predicate"
                    )))
                }
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn target_value(&self, k: usize, row: &[Value]) -> Result<f64> {
        let c = self.compiled[k].target.expect("max has a target");
        row.get(c)
            .and_then(Value::as_num)
            .ok_or_else(|| DelError::Schema(format!("target column {c} is not numeric in row")))
    }

    /// Runs measurement `k` over the effective rows of `s`.
    pub fn evaluate(&self, k: usize, s: MaskedSample<'_>) -> Result<MeasurementResult> {
        let mut touched = Vec::new();
        let mut best: Option<f64> = None;
        for (r, row) in s.sample.x_seq.iter().enumerate() {
            if !s.is_kept(r) || !self.matches(k, row)? {
                continue;
            }
            touched.push(r);
            if self.compiled[k].aggregation == Aggregation::Max {
                let v = self.target_value(k, row)?;
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        let value = match self.compiled[k].aggregation {
            Aggregation::Count => touched.len() as f64,
            Aggregation::Max => best.unwrap_or(self.empty_max_default),
        };
        Ok(MeasurementResult {
            value,
            touched_rows: touched,
        })
    }

    /// All measurements in id order: values `f` plus touched rows per id.
    pub fn evaluate_all(&self, s: MaskedSample<'_>) -> Result<(Vec<f64>, Vec<Vec<usize>>)> {
        let mut f = Vec::with_capacity(self.len());
        let mut touched = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let r = self.evaluate(k, s)?;
            f.push(r.value);
            touched.push(r.touched_rows);
        }
        Ok((f, touched))
    }

    /// Precomputes, per measurement, which rows pass the predicates. The
    /// predicates do not depend on the mask, so masked re-evaluation only
    /// has to filter these lists.
    pub fn index(&self, sample: &Sample) -> Result<SampleIndex> {
        let mut per_measure = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let mut rows = Vec::new();
            let mut values = Vec::new();
            for (r, row) in sample.x_seq.iter().enumerate() {
                if self.matches(k, row)? {
                    rows.push(r);
                    if self.compiled[k].aggregation == Aggregation::Max {
                        values.push(self.target_value(k, row)?);
                    }
                }
            }
            per_measure.push(MatchedRows {
                aggregation: self.compiled[k].aggregation,
                rows,
                values,
            });
        }
        Ok(SampleIndex {
            n_rows: sample.len(),
            per_measure,
            empty_max_default: self.empty_max_default,
        })
    }
}

#[derive(Debug, Clone)]
struct MatchedRows {
    aggregation: Aggregation,
    rows: Vec<usize>,
    values: Vec<f64>,
}

/// Predicate matches of one sample, reusable across masks.
#[derive(Debug, Clone)]
pub struct SampleIndex {
    n_rows: usize,
    per_measure: Vec<MatchedRows>,
    empty_max_default: f64,
}

impl SampleIndex {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Values of every measurement given a keep-vector (`None` keeps all rows).
    pub fn values(&self, keep: Option<&[bool]>) -> Vec<f64> {
        self.per_measure
            .iter()
            .map(|m| match m.aggregation {
                Aggregation::Count => match keep {
                    None => m.rows.len() as f64,
                    Some(k) => m.rows.iter().filter(|&&r| k[r]).count() as f64,
                },
                Aggregation::Max => m
                    .rows
                    .iter()
                    .zip(&m.values)
                    .filter(|(&r, _)| keep.is_none_or(|k| k[r]))
                    .map(|(_, &v)| v)
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
                    .unwrap_or(self.empty_max_default),
            })
            .collect()
    }

    /// Touched rows of every measurement under `keep`.
    pub fn touched(&self, keep: Option<&[bool]>) -> Vec<Vec<usize>> {
        self.per_measure
            .iter()
            .map(|m| match keep {
                None => m.rows.clone(),
                Some(k) => m.rows.iter().copied().filter(|&r| k[r]).collect(),
            })
            .collect()
    }

    pub fn evaluate(&self, keep: Option<&[bool]>) -> (Vec<f64>, Vec<Vec<usize>>) {
        (self.values(keep), self.touched(keep))
    }
}
