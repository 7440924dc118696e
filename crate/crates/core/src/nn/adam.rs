use serde::{Deserialize, Serialize};

use super::ParamMut;
use crate::{Error, Result};

/// How weight decay enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightDecayMode {
    /// `param -= lr * decay * param` before the Adam delta (AdamW).
    #[default]
    Decoupled,
    /// `grad += decay * param` before the moment updates (classic L2).
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_mode: WeightDecayMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_mode: WeightDecayMode::Decoupled,
        }
    }
}

/// Moment accumulators for a fixed, ordered list of parameter tensors.
///
/// Buffers are sized on the first step and must match on every later step.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }
}

/// One Adam update with bias-corrected moments.
///
/// Gradients are checked before any parameter is touched, so a fault leaves
/// the parameters and moments as they were.
pub fn adam_step(params: &mut [ParamMut<'_>], state: &mut AdamState) -> Result<()> {
    for p in params.iter() {
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { param: p.name.clone() });
        }
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        state.second = state.first.clone();
    } else if state.first.len() != params.len()
        || state.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.value.len())
    {
        return Err(Error::Shape("parameter list changed shape between Adam steps".into()));
    }

    let AdamConfig { learning_rate: lr, weight_decay, beta1, beta2, eps, decay_mode } =
        state.config;
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    for ((p, m), v) in params.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        for i in 0..p.value.len() {
            let mut g = p.grad[i];
            match decay_mode {
                WeightDecayMode::Decoupled => p.value[i] -= lr * weight_decay * p.value[i],
                WeightDecayMode::Coupled => g += weight_decay * p.value[i],
            }
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_scalar(value: &mut f64, grad: f64, state: &mut AdamState) -> Result<()> {
        let mut v = [*value];
        let mut g = [grad];
        let mut params = [ParamMut::new("w", &mut v, &mut g)];
        adam_step(&mut params, state)?;
        *value = v[0];
        Ok(())
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut state =
            AdamState::new(AdamConfig { weight_decay: 0.0, ..AdamConfig::default() });
        let mut w = 0.37;
        for _ in 0..5 {
            step_scalar(&mut w, 0.0, &mut state).unwrap();
        }
        assert_eq!(w, 0.37);
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut state =
            AdamState::new(AdamConfig { weight_decay: 0.0, ..AdamConfig::default() });
        let mut w = 0.0;
        step_scalar(&mut w, 1.0, &mut state).unwrap();
        // m_hat = v_hat = 1 after bias correction.
        let expected = -1e-4 * 1.0 / (1.0 + 1e-8);
        assert!((w - expected).abs() < 1e-18, "{w}");
    }

    #[test]
    fn moments_follow_closed_form_recurrence() {
        let mut state =
            AdamState::new(AdamConfig { weight_decay: 0.0, ..AdamConfig::default() });
        let mut w = 1.0;
        let g = 0.3;
        step_scalar(&mut w, g, &mut state).unwrap();
        step_scalar(&mut w, g, &mut state).unwrap();
        // m2 = (1-b1) g (b1 + 1), v2 = (1-b2) g^2 (b2 + 1)
        let m2 = 0.1 * g * (0.9 + 1.0);
        let v2 = 0.001 * g * g * (0.999 + 1.0);
        assert!((state.first_moments()[0][0] - m2).abs() < 1e-15);
        assert!((state.second_moments()[0][0] - v2).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_shrinks_before_delta() {
        let cfg = AdamConfig { learning_rate: 0.1, weight_decay: 0.5, ..AdamConfig::default() };
        let mut state = AdamState::new(cfg);
        let mut w = 2.0;
        step_scalar(&mut w, 0.0, &mut state).unwrap();
        assert!((w - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);

        let cfg = AdamConfig { decay_mode: WeightDecayMode::Coupled, ..cfg };
        let mut state = AdamState::new(cfg);
        let mut w = 2.0;
        step_scalar(&mut w, 0.0, &mut state).unwrap();
        // Gradient becomes 1.0, so the bias-corrected step is ~lr.
        assert!((w - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_names_parameter_and_leaves_state() {
        let mut state = AdamState::new(AdamConfig::default());
        let mut a = [1.0, 2.0];
        let mut ga = [0.1, 0.1];
        let mut b = [3.0];
        let mut gb = [f64::NAN];
        let mut params =
            [ParamMut::new("a", &mut a, &mut ga), ParamMut::new("critic.b", &mut b, &mut gb)];
        match adam_step(&mut params, &mut state) {
            Err(Error::NonFiniteGradient { param }) => assert_eq!(param, "critic.b"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(a, [1.0, 2.0]);
        assert_eq!(state.step_count(), 0);
    }
}
