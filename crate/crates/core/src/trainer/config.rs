use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DelError, Result};
use crate::link_search::SearchConfig;
use crate::rule_net::RuleNetConfig;

/// Accuracy gate for the general-population preset.
pub const ACC_THRESHOLD_GENERAL: f64 = 0.925;
/// Accuracy gate for the special-population preset.
pub const ACC_THRESHOLD_SPECIAL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Steps of stage 1 (rules trained on raw samples).
    pub sigma1: usize,
    /// Total steps.
    pub sigma2: usize,
    pub l_rule: f64,
    pub l_assess: f64,
    /// Samples per class in every batch.
    pub beta: usize,
    /// Steps between global searches.
    pub mu_gopt: usize,
    /// Generations per global search.
    pub sigma_gopt: usize,
    /// Steps between validations.
    pub mu_val: usize,
    pub acc_threshold: f64,
    pub seed: u64,
    /// `false` runs without the data assessing model (masks stay all-ones).
    pub use_assess: bool,
    /// Spread of the global search's initial population around the current
    /// thresholds, as a fraction of each bound's width. `None` draws the
    /// population uniformly over the bounds.
    pub de_init_radius: Option<f64>,
    pub rule_net: RuleNetConfig,
    pub search: SearchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sigma1: 1000,
            sigma2: 40_000,
            l_rule: 1e-4,
            l_assess: 1e-4,
            beta: 4,
            mu_gopt: 50,
            sigma_gopt: 5,
            mu_val: 100,
            acc_threshold: ACC_THRESHOLD_GENERAL,
            seed: 0,
            use_assess: true,
            de_init_radius: Some(0.02),
            rule_net: RuleNetConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Short schedule for quick runs: 200 stage-1 steps of 3000. Learning
    /// rates are raised tenfold so thresholds can travel about as far as
    /// they do over the full schedule.
    pub fn desk() -> Self {
        Self {
            sigma1: 200,
            sigma2: 3000,
            l_rule: 1e-3,
            l_assess: 1e-3,
            ..Self::default()
        }
    }

    /// Disables the critical-row loss.
    pub fn without_critical_loss(mut self) -> Self {
        self.rule_net.critical_weight = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("beta", self.beta),
            ("mu_gopt", self.mu_gopt),
            ("sigma_gopt", self.sigma_gopt),
            ("mu_val", self.mu_val),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(DelError::Config(format!("{name} must be positive")));
            }
        }
        if self.sigma1 > self.sigma2 {
            return Err(DelError::Config(format!(
                "sigma1 ({}) exceeds sigma2 ({})",
                self.sigma1, self.sigma2
            )));
        }
        if !(self.acc_threshold > 0.0 && self.acc_threshold < 1.0) {
            return Err(DelError::Config(format!(
                "acc_threshold {} is not in (0, 1)",
                self.acc_threshold
            )));
        }
        for (name, lr) in [("l_rule", self.l_rule), ("l_assess", self.l_assess)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(DelError::Config(format!("{name} must be a positive number")));
            }
        }
        if let Some(r) = self.de_init_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(DelError::Config(format!("de_init_radius {r} must be positive")));
            }
        }
        self.search.validate()
    }

    /// SHA-256 over the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

/// SHA-256 of a value's JSON serialization, as lowercase hex.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_desk_is_shorter() {
        TrainConfig::default().validate().unwrap();
        let d = TrainConfig::desk();
        d.validate().unwrap();
        assert_eq!((d.sigma1, d.sigma2), (200, 3000));
    }

    #[test]
    fn rejects_reversed_stages() {
        let c = TrainConfig {
            sigma1: 10,
            sigma2: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(DelError::Config(_))));
    }

    #[test]
    fn hash_depends_on_content() {
        let a = TrainConfig::default();
        let b = TrainConfig { seed: 1, ..a.clone() };
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"sigma2": 7, "sigma1": 3}"#).unwrap();
        assert_eq!(c.beta, 4);
        assert_eq!(c.sigma2, 7);
    }
}
