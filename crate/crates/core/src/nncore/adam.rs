//! Bias-corrected Adam and global-norm gradient clipping.

use super::layers::ParamSet;
use super::{NnError, NnResult};
use ndarray::Array2;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.95,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> NnResult<()> {
        if self.learning_rate <= 0.0 {
            return Err(NnError::InvalidConfig("learning_rate must be > 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(NnError::InvalidConfig(format!("{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// First/second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, name: &str) -> Option<&Array2<f64>> {
        self.m.get(name)
    }
}

/// One Adam update over every named gradient. Parameters without a gradient
/// entry are left untouched.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &BTreeMap<String, Array2<f64>>,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> NnResult<()> {
    cfg.validate()?;
    for (name, g) in grads {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Divergence(format!(
                "divergence detected: non-finite gradient for '{name}'"
            )));
        }
    }
    state.step += 1;
    let t = state.step;
    let bias1 = 1.0 - cfg.beta1.powi(t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(t as i32);
    for (name, g) in grads {
        let p = params.get_mut(name)?;
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Array2::zeros(g.dim()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Array2::zeros(g.dim()));
        for ((pv, gv), (mv, vv)) in p.iter_mut().zip(g.iter()).zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = *mv / bias1;
            let v_hat = *vv / bias2;
            *pv -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Scales all gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Array2<f64>>, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.values() {
        for &v in g.iter() {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            g.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_param(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("x", Array2::from_elem((1, 1), v));
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = one_param(0.4);
        let mut state = AdamState::new();
        let mut grads = BTreeMap::new();
        grads.insert("x".to_string(), Array2::zeros((1, 1)));
        // Seed a nonzero moment first so decay is observable.
        let mut warm = BTreeMap::new();
        warm.insert("x".to_string(), Array2::from_elem((1, 1), 1.0));
        adam_step(&mut params, &warm, &mut state, &AdamConfig::default()).unwrap();
        let before = params.get("x").unwrap()[[0, 0]];
        let m_before = state.first_moment("x").unwrap()[[0, 0]];
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        // m decays toward zero; the bias-corrected update with g = 0 still
        // nudges params, but with m scaled by beta1 only.
        let m_after = state.first_moment("x").unwrap()[[0, 0]];
        assert!((m_after - 0.95 * m_before).abs() < 1e-15);
        assert!(params.get("x").unwrap()[[0, 0]] < before); // momentum tail
    }

    #[test]
    fn zero_gradient_from_rest_is_exact_noop() {
        let mut params = one_param(0.4);
        let mut state = AdamState::new();
        let mut grads = BTreeMap::new();
        grads.insert("x".to_string(), Array2::zeros((1, 1)));
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params.get("x").unwrap()[[0, 0]], 0.4);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction, the first update is lr * g / (|g| + eps').
        let mut params = one_param(1.0);
        let mut state = AdamState::new();
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut grads = BTreeMap::new();
        grads.insert("x".to_string(), Array2::from_elem((1, 1), 0.5));
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        let delta = 1.0 - params.get("x").unwrap()[[0, 0]];
        assert!((delta - 0.1).abs() < 1e-6, "delta {delta}");
    }

    #[test]
    fn two_steps_reduce_quadratic_loss() {
        // loss = x^2, grad = 2x.
        let mut params = one_param(2.0);
        let mut state = AdamState::new();
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let loss = |p: &ParamSet| p.get("x").unwrap()[[0, 0]].powi(2);
        let before = loss(&params);
        for _ in 0..2 {
            let x = params.get("x").unwrap()[[0, 0]];
            let mut grads = BTreeMap::new();
            grads.insert("x".to_string(), Array2::from_elem((1, 1), 2.0 * x));
            adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        }
        assert!(loss(&params) < before);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut params = one_param(0.0);
        let mut state = AdamState::new();
        let mut grads = BTreeMap::new();
        grads.insert("x".to_string(), Array2::from_elem((1, 1), f64::NAN));
        let err = adam_step(&mut params, &grads, &mut state, &AdamConfig::default());
        assert!(matches!(err, Err(NnError::Divergence(_))));
    }

    #[test]
    fn clipping_preserves_direction() {
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), array![[3.0, 0.0]]);
        grads.insert("b".to_string(), array![[0.0, 4.0]]);
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads["a"][[0, 0]] - 0.6).abs() < 1e-12);
        assert!((grads["b"][[0, 1]] - 0.8).abs() < 1e-12);
    }
}
