//! Adam with bias correction, plus global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.995,
            learning_rate: 0.001,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for a fixed, ordered list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new<'a>(config: AdamConfig, shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let first_moment: Vec<Tensor> = shapes.into_iter().map(Tensor::zeros).collect();
        Self {
            second_moment: first_moment.clone(),
            first_moment,
            step_count: 0,
            beta1: config.beta1,
            beta2: config.beta2,
            learning_rate: config.learning_rate,
            epsilon: config.epsilon,
        }
    }

    fn update(&mut self, slot: usize, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        let m = &mut self.first_moment[slot];
        let v = &mut self.second_moment[slot];
        if param.shape() != grad.shape() || m.shape() != param.shape() {
            return Err(Error::Shape(format!(
                "adam: parameter {:?}, gradient {:?}, moment {:?}",
                param.shape(),
                grad.shape(),
                m.shape()
            )));
        }
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    state.step_count += 1;
    for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        state.update(slot, p, g)?;
    }
    Ok(())
}

/// Scale `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

/// Adam bound to a subset of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    ids: Vec<ParamId>,
    state: OptimizerState,
    clip_norm: Option<f64>,
}

impl Adam {
    pub fn new(store: &ParamStore, ids: Vec<ParamId>, config: AdamConfig, clip_norm: Option<f64>) -> Self {
        let state = OptimizerState::new(config, ids.iter().map(|&id| store.get(id).shape()));
        Self {
            ids,
            state,
            clip_norm,
        }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// Apply one update; `grads` is aligned with [`Adam::ids`]. Returns the
    /// pre-clipping gradient norm.
    pub fn step(&mut self, store: &mut ParamStore, mut grads: Vec<Tensor>) -> Result<f64> {
        if grads.len() != self.ids.len() {
            return Err(Error::Shape("gradient count does not match optimizer".into()));
        }
        let norm = match self.clip_norm {
            Some(max) => clip_global_norm(&mut grads, max),
            None => grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt(),
        };
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("gradient norm is {norm}")));
        }
        self.state.step_count += 1;
        for (slot, (&id, g)) in self.ids.iter().zip(&grads).enumerate() {
            self.state.update(slot, store.get_mut(id), g)?;
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_for(params: &[Tensor]) -> OptimizerState {
        OptimizerState::new(AdamConfig::default(), params.iter().map(|p| p.shape()))
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut params = vec![Tensor::vector(vec![0.3, -1.2])];
        let before = params.clone();
        let mut state = state_for(&params);
        adam_step(&mut params, &[Tensor::zeros(&[2])], &mut state).unwrap();
        assert_eq!(params, before);
        assert!(state.first_moment[0].data().iter().all(|&v| v == 0.0));
        assert!(state.second_moment[0].data().iter().all(|&v| v == 0.0));
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut state = state_for(&params);
        adam_step(&mut params, &[Tensor::scalar(1.0)], &mut state).unwrap();
        // m̂ = 1, v̂ = 1: update = lr / (1 + ε)
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((params[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_monotonically_against_sign() {
        for sign in [1.0, -1.0] {
            let mut params = vec![Tensor::scalar(0.0)];
            let mut state = state_for(&params);
            let mut last = 0.0;
            for _ in 0..2 {
                adam_step(&mut params, &[Tensor::scalar(sign * 0.37)], &mut state).unwrap();
                let now = params[0].item();
                assert!(sign * (now - last) < 0.0);
                last = now;
            }
        }
    }

    #[test]
    fn bit_reproducible() {
        let run = || {
            let mut params = vec![Tensor::vector(vec![0.1, 0.2, 0.3])];
            let mut state = state_for(&params);
            for k in 0..5 {
                let g = Tensor::vector(vec![0.5 - k as f64, 0.25 * k as f64, 1e-3]);
                adam_step(&mut params, &[g], &mut state).unwrap();
            }
            params[0].data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut params = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut state = state_for(&params);
        let err = adam_step(&mut params, &[Tensor::zeros(&[3])], &mut state);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn clipping_caps_norm() {
        let mut grads = vec![Tensor::vector(vec![3.0, 4.0])];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert_eq!(norm, 5.0);
        assert!((grads[0].squared_norm().sqrt() - 1.0).abs() < 1e-12);
    }
}
