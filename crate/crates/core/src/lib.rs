//! Differentiable expert-rule learning with a graph-based data assessing model.

pub mod assess_net;
pub mod error;
pub mod link_search;
pub mod measure;
pub mod metrics;
pub mod numerics;
pub mod rule_dsl;
pub mod rule_net;
pub mod synth;
pub mod trainer;

pub use error::{DelError, Result};
