//! Dense linear algebra, seeded randomness, Adam and differential evolution.

mod adam;
mod de;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamState};
pub use de::{de_optimize, de_optimize_from, de_optimize_local, DEConfig, DEResult};
pub use matrix::{matmul, matmul_nt, matmul_tn, Matrix};
pub use rng::{seeded_rng, RngStream};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
