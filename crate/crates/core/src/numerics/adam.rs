use serde::{Deserialize, Serialize};

use crate::error::{DelError, Result};

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One bias-corrected Adam update, in place.
///
/// Zero gradient entries leave their parameters untouched even when the
/// moments carry history, so frozen coordinates stay fixed.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(DelError::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    if let Some((index, &value)) = grads.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(DelError::NonFiniteGradient { index, value });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        if g == 0.0 {
            continue;
        }
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 3.0];
        adam_step(&mut s, &mut p, &[0.5, 0.5, 0.5]).unwrap();
        let before = p.clone();
        adam_step(&mut s, &mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 2);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new(2, 0.01);
        let mut p = vec![0.0, 0.0];
        adam_step(&mut s, &mut p, &[3.7, -0.2]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut s = AdamState::new(1, 0.1);
        let mut theta = vec![0.0];
        for _ in 0..200 {
            let g = 2.0 * (theta[0] - 3.0);
            adam_step(&mut s, &mut theta, &[g]).unwrap();
        }
        assert!((theta[0] - 3.0).abs() < 0.05, "theta = {}", theta[0]);
    }

    #[test]
    fn non_finite_gradient_names_index() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = vec![0.0; 3];
        let err = adam_step(&mut s, &mut p, &[0.0, 1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, DelError::NonFiniteGradient { index: 2, .. }));
        assert_eq!(s.step, 0);
    }
}
