//! Differential evolution, rand/1/bin variant.

use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use crate::error::{DelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    pub population_size: usize,
    pub mutation_factor: f64,
    pub crossover_prob: f64,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl DEConfig {
    /// Classic defaults: population 15 x dimension capped at 64, F = 0.8, CR = 0.7.
    pub fn for_bounds(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        let population_size = (15 * bounds.len()).clamp(4, 64);
        Self {
            population_size,
            mutation_factor: 0.8,
            crossover_prob: 0.7,
            bounds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(DelError::Config(format!(
                "DE population must be at least 4, got {}",
                self.population_size
            )));
        }
        if !(0.0..=2.0).contains(&self.mutation_factor) {
            return Err(DelError::Config("DE mutation factor outside [0, 2]".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(DelError::Config("DE crossover probability outside [0, 1]".into()));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(DelError::Config(format!("DE bound {i} is ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DEResult {
    pub best: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best value after initialization and after each generation.
    pub history: Vec<f64>,
}

/// Minimize `objective` within `config.bounds`.
pub fn de_optimize(
    objective: impl FnMut(&[f64]) -> f64,
    config: &DEConfig,
    max_iters: usize,
) -> Result<DEResult> {
    de_optimize_from(objective, config, max_iters, None)
}

/// Like [`de_optimize`], but the first population member is `start`
/// (clipped into bounds) instead of a random draw.
pub fn de_optimize_from(
    objective: impl FnMut(&[f64]) -> f64,
    config: &DEConfig,
    max_iters: usize,
    start: Option<&[f64]>,
) -> Result<DEResult> {
    config.validate()?;
    check_dim(config, start)?;
    let mut rng = RngStream::new(config.seed);
    let population: Vec<Vec<f64>> = (0..config.population_size)
        .map(|i| match (i, start) {
            (0, Some(s)) => clip(s, &config.bounds),
            _ => config
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.uniform_range(lo, hi))
                .collect(),
        })
        .collect();
    evolve(objective, config, max_iters, population, rng)
}

/// Like [`de_optimize_from`], but the rest of the initial population is drawn
/// uniformly within `radius` times each bound's width around `center`.
pub fn de_optimize_local(
    objective: impl FnMut(&[f64]) -> f64,
    config: &DEConfig,
    max_iters: usize,
    center: &[f64],
    radius: f64,
) -> Result<DEResult> {
    config.validate()?;
    check_dim(config, Some(center))?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(DelError::Config(format!("DE init radius {radius} must be positive")));
    }
    let mut rng = RngStream::new(config.seed);
    let center = clip(center, &config.bounds);
    let population: Vec<Vec<f64>> = (0..config.population_size)
        .map(|i| {
            if i == 0 {
                return center.clone();
            }
            center
                .iter()
                .zip(&config.bounds)
                .map(|(&c, &(lo, hi))| {
                    let r = radius * (hi - lo);
                    rng.uniform_range((c - r).max(lo), (c + r).min(hi))
                })
                .collect()
        })
        .collect();
    evolve(objective, config, max_iters, population, rng)
}

fn check_dim(config: &DEConfig, start: Option<&[f64]>) -> Result<()> {
    let dim = config.bounds.len();
    match start {
        Some(s) if s.len() != dim => Err(DelError::Shape(format!(
            "DE start has {} entries for {dim} bounds",
            s.len()
        ))),
        _ => Ok(()),
    }
}

fn clip(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter().zip(bounds).map(|(&v, &(lo, hi))| v.clamp(lo, hi)).collect()
}

fn evolve(
    mut objective: impl FnMut(&[f64]) -> f64,
    config: &DEConfig,
    max_iters: usize,
    mut population: Vec<Vec<f64>>,
    mut rng: RngStream,
) -> Result<DEResult> {
    let dim = config.bounds.len();
    let np = population.len();
    let mut fitness: Vec<f64> = population.iter().map(|x| sanitize(objective(x))).collect();
    let mut evaluations = np;

    let mut best_idx = argmin(&fitness);
    let mut history = vec![fitness[best_idx]];

    let mut trial = vec![0.0; dim];
    for _ in 0..max_iters {
        for i in 0..np {
            let (a, b, c) = pick_three(&mut rng, np, i);
            let forced = rng.below(dim.max(1));
            for j in 0..dim {
                let (lo, hi) = config.bounds[j];
                trial[j] = if j == forced || rng.uniform() < config.crossover_prob {
                    let v = population[a][j]
                        + config.mutation_factor * (population[b][j] - population[c][j]);
                    if v < lo || v > hi {
                        rng.uniform_range(lo, hi)
                    } else {
                        v
                    }
                } else {
                    population[i][j]
                };
            }
            let f = sanitize(objective(&trial));
            evaluations += 1;
            if f <= fitness[i] {
                population[i].copy_from_slice(&trial);
                fitness[i] = f;
                if f < fitness[best_idx] {
                    best_idx = i;
                }
            }
        }
        history.push(fitness[best_idx]);
    }

    Ok(DEResult {
        best: population[best_idx].clone(),
        value: fitness[best_idx],
        evaluations,
        history,
    })
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn pick_three(rng: &mut RngStream, np: usize, exclude: usize) -> (usize, usize, usize) {
    let mut draw = |taken: &[usize]| loop {
        let k = rng.below(np);
        if k != exclude && !taken.contains(&k) {
            return k;
        }
    };
    let a = draw(&[]);
    let b = draw(&[a]);
    let c = draw(&[a, b]);
    (a, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(bounds: Vec<(f64, f64)>, pop: usize) -> DEConfig {
        DEConfig {
            population_size: pop,
            ..DEConfig::for_bounds(bounds, 17)
        }
    }

    #[test]
    fn finds_quadratic_minimum() {
        let c = cfg(vec![(-10.0, 10.0)], 16);
        let r = de_optimize(|x| (x[0] - 3.0).powi(2), &c, 100).unwrap();
        assert!((r.best[0] - 3.0).abs() < 0.01, "best = {:?}", r.best);
    }

    #[test]
    fn zero_iterations_returns_best_initial_member() {
        let c = cfg(vec![(-10.0, 10.0), (0.0, 1.0)], 8);
        let mut seen = Vec::new();
        let r = de_optimize(
            |x| {
                let v = x[0].abs() + x[1];
                seen.push(v);
                v
            },
            &c,
            0,
        )
        .unwrap();
        assert_eq!(seen.len(), 8);
        let min = seen.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.value, min);
    }

    #[test]
    fn flat_objective_returns_in_bounds_constant() {
        let c = cfg(vec![(-1.0, 2.0), (5.0, 6.0)], 10);
        let r = de_optimize(|_| 4.5, &c, 20).unwrap();
        assert_eq!(r.value, 4.5);
        assert!((-1.0..=2.0).contains(&r.best[0]));
        assert!((5.0..=6.0).contains(&r.best[1]));
    }

    #[test]
    fn never_evaluates_out_of_bounds_and_history_is_monotone() {
        let bounds = vec![(-2.0, -1.0), (3.0, 7.0), (0.0, 0.5)];
        let c = cfg(bounds.clone(), 12);
        let r = de_optimize(
            |x| {
                for (v, &(lo, hi)) in x.iter().zip(&bounds) {
                    assert!(*v >= lo && *v <= hi, "{v} outside [{lo}, {hi}]");
                }
                x.iter().map(|v| v.sin()).sum()
            },
            &c,
            30,
        )
        .unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn start_member_is_kept_when_best() {
        let c = cfg(vec![(-10.0, 10.0)], 8);
        let r = de_optimize_from(|x| (x[0] - 1.25).abs(), &c, 0, Some(&[1.25])).unwrap();
        assert_eq!(r.best, vec![1.25]);
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cfg(vec![(-5.0, 5.0), (-5.0, 5.0)], 10);
        let f = |x: &[f64]| x[0] * x[0] + (x[1] - 1.0).powi(2);
        let a = de_optimize(f, &c, 15).unwrap();
        let b = de_optimize(f, &c, 15).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_small_population_and_bad_bounds() {
        assert!(de_optimize(|_| 0.0, &cfg(vec![(0.0, 1.0)], 3), 1).is_err());
        assert!(de_optimize(|_| 0.0, &cfg(vec![(1.0, 1.0)], 5), 1).is_err());
    }
}
