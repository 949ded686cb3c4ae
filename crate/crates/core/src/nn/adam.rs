use serde::{Deserialize, Serialize};

use super::model::{ModelGraph, ParamBlock};
use super::NnError;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps_hat: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn with_default_lr(n_params: usize) -> Self {
        Self::new(n_params, DEFAULT_LEARNING_RATE)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected update. `blocks` only names offending ranges in errors.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], blocks: &[ParamBlock]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Shape(format!(
                "adam state has {} slots, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            let name = blocks
                .iter()
                .find(|b| (b.start..b.start + b.len).contains(&i))
                .map_or_else(|| format!("parameter {i}"), |b| format!("{} (index {})", b.name, i - b.start));
            return Err(NnError::NonFiniteGradient(name));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= self.learning_rate * mh / (vh.sqrt() + self.eps_hat);
        }
        Ok(())
    }
}

impl ModelGraph {
    /// Applies one Adam update from the accumulated gradients.
    pub fn adam_step(&mut self, state: &mut AdamState) -> Result<(), NnError> {
        let blocks = self.param_blocks();
        let grads = self.grads().to_vec();
        state.step(self.params_mut(), &grads, &blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        s.step(&mut p, &[0.0; 3], &[]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = AdamState::new(2, 1e-3);
        let mut p = vec![0.0, 0.0];
        s.step(&mut p, &[4.0, -0.25], &[]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn quadratic_converges() {
        let mut s = AdamState::new(1, 0.1);
        let mut w = vec![0.0];
        for _ in 0..100 {
            let g = 2.0 * (w[0] - 3.0);
            s.step(&mut w, &[g], &[]).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.2, "w = {}", w[0]);
    }

    #[test]
    fn nan_names_block() {
        let mut s = AdamState::new(4, 0.1);
        let blocks = vec![
            ParamBlock { name: "layer 0 (dense) weights".into(), layer: 0, start: 0, len: 3 },
            ParamBlock { name: "layer 0 (dense) bias".into(), layer: 0, start: 3, len: 1 },
        ];
        let err = s.step(&mut [0.0; 4], &[0.0, 0.0, 0.0, f64::NAN], &blocks).unwrap_err();
        assert!(err.to_string().contains("layer 0 (dense) bias"), "{err}");
        assert_eq!(s.step_count(), 0);
    }
}
