//! Seeded, splittable random streams.
//!
//! Every module that needs randomness receives its own [`RngStream`], derived
//! from a parent by [`RngStream::split`]. Splitting is a pure function of the
//! parent seed and a key, so sub-streams do not depend on how much of the
//! parent has been consumed or on thread scheduling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer, used to derive child seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64) -> RngStream {
    RngStream::new(seed)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `key`.
    pub fn split(&self, key: u64) -> RngStream {
        RngStream::new(mix(self.seed ^ mix(key.wrapping_add(0xA076_1D64_78BD_642F))))
    }

    /// Child stream keyed by a path of integers, e.g. `(step, sample)`.
    pub fn split_path(&self, keys: &[u64]) -> RngStream {
        keys.iter().fold(self.clone(), |s, &k| s.split(k))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0) has no valid outcome");
        self.inner.gen_range(0..n)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        self.inner.gen_range(lo..=hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.inner);
        p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = seeded_rng(42);
        let mut b = seeded_rng(42);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn permutation_is_bijection() {
        let mut r = seeded_rng(3);
        for n in [0, 1, 2, 17, 100] {
            let mut p = r.permutation(n);
            p.sort_unstable();
            assert_eq!(p, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn below_five_is_roughly_uniform() {
        let mut r = seeded_rng(11);
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            counts[r.below(5)] += 1;
        }
        for c in counts {
            let freq = c as f64 / 10_000.0;
            assert!((0.17..=0.23).contains(&freq), "frequency {freq}");
        }
    }

    #[test]
    fn split_is_independent_of_consumption() {
        let parent = seeded_rng(9);
        let mut consumed = parent.clone();
        for _ in 0..10 {
            consumed.uniform();
        }
        let mut a = parent.split(5);
        let mut b = consumed.split(5);
        assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        let mut c = parent.split(6);
        assert_ne!(parent.split(5).uniform().to_bits(), c.uniform().to_bits());
    }
}
