//! Sparse autoencoder that squeezes an event context into one scalar.

use log::warn;
use serde::{Deserialize, Serialize};

use super::ArenaError;
use crate::nn::{mse, Activation, AdamState, LayerSpec, ModelGraph, Tensor};
use crate::rng::derive_seed;
use crate::trace::EventContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaeSpec {
    /// Hidden widths of the encoder; the code layer of width 1 follows.
    pub hidden: Vec<usize>,
    /// L1 weight on the code activation.
    pub sparsity: f64,
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once the reconstruction MSE drops below this.
    pub target_mse: f64,
}

impl Default for SaeSpec {
    fn default() -> Self {
        Self { hidden: vec![4], sparsity: 1e-3, learning_rate: 1e-2, max_iterations: 20_000, target_mse: 1e-4 }
    }
}

/// Context vector layout: `[attendees scaled to [0, 1], one-hot event type]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextCoder {
    pub types: Vec<String>,
    pub attendees_max: f64,
}

impl ContextCoder {
    pub fn fit(contexts: &[EventContext]) -> Self {
        let mut types: Vec<String> = contexts.iter().map(|c| c.event_type.clone()).collect();
        types.sort();
        types.dedup();
        let attendees_max = contexts.iter().map(|c| f64::from(c.attendees)).fold(0.0, f64::max);
        Self { types, attendees_max }
    }

    pub fn dim(&self) -> usize {
        1 + self.types.len()
    }

    /// Unknown event types encode as all-zero one-hot.
    pub fn vector(&self, c: &EventContext) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        v[0] = if self.attendees_max > 0.0 { f64::from(c.attendees) / self.attendees_max } else { 0.0 };
        if let Some(i) = self.types.iter().position(|t| *t == c.event_type) {
            v[1 + i] = 1.0;
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct Sae {
    pub coder: ContextCoder,
    pub encoder: ModelGraph,
    pub decoder: ModelGraph,
    pub reconstruction_mse: f64,
    pub iterations: usize,
    /// Raw code range over the training contexts.
    pub code_range: (f64, f64),
}

fn tower(input: usize, hidden: &[usize], out: usize, seed: u64) -> Result<ModelGraph, ArenaError> {
    let mut layers: Vec<LayerSpec> = hidden.iter().map(|&h| LayerSpec::dense(h, Activation::Tanh)).collect();
    layers.push(LayerSpec::dense(out, Activation::Linear));
    Ok(ModelGraph::new(vec![input], 0, layers, seed)?)
}

impl Sae {
    pub fn encode(&self, c: &EventContext) -> f64 {
        self.encode_vector(&self.coder.vector(c))
    }

    pub fn encode_vector(&self, v: &[f64]) -> f64 {
        self.encoder.predict(&Tensor::vector(v.to_vec()), None).expect("coder fixes the width").data()[0]
    }

    /// Code mapped affinely so the training contexts span `[0, 1]`.
    pub fn code(&self, c: &EventContext) -> f64 {
        let (lo, hi) = self.code_range;
        if hi > lo {
            (self.encode(c) - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    pub fn decode(&self, code: f64) -> Vec<f64> {
        self.decoder.predict(&Tensor::vector(vec![code]), None).expect("scalar code").into_data()
    }
}

/// Trains encoder and decoder jointly on full batches of `contexts`.
pub fn sae_train(contexts: &[EventContext], spec: &SaeSpec, seed: u64) -> Result<Sae, ArenaError> {
    if contexts.len() < 2 {
        return Err(ArenaError::InsufficientEvents { needed: 2, got: contexts.len() });
    }
    if spec.hidden.iter().any(|&h| h == 0) {
        return Err(ArenaError::InvalidSpec("SAE hidden widths must be >= 1".into()));
    }
    let coder = ContextCoder::fit(contexts);
    let dim = coder.dim();
    let mut encoder = tower(dim, &spec.hidden, 1, derive_seed(seed, &[1]))?;
    let rev: Vec<usize> = spec.hidden.iter().rev().copied().collect();
    let mut decoder = tower(1, &rev, dim, derive_seed(seed, &[2]))?;
    let mut xs: Vec<Vec<f64>> = contexts.iter().map(|c| coder.vector(c)).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    xs.dedup();

    if xs.len() == 1 {
        warn!("all SAE training contexts are identical; the code is constant");
        encoder.params_mut().fill(0.0);
        let n = decoder.n_params();
        let p = decoder.params_mut();
        p.fill(0.0);
        p[n - dim..].copy_from_slice(&xs[0]);
        return Ok(Sae { coder, encoder, decoder, reconstruction_mse: 0.0, iterations: 0, code_range: (0.0, 0.0) });
    }

    let mut adam_e = AdamState::new(encoder.n_params(), spec.learning_rate);
    let mut adam_d = AdamState::new(decoder.n_params(), spec.learning_rate);
    let inputs: Vec<Tensor> = xs.iter().map(|x| Tensor::vector(x.clone())).collect();
    let n = xs.len() as f64;
    let mut recon = f64::INFINITY;
    let mut it = 0;
    while it < spec.max_iterations {
        encoder.zero_grad();
        decoder.zero_grad();
        let mut total = 0.0;
        for (x, xt) in xs.iter().zip(&inputs) {
            let code = encoder.forward(xt, None, true)?;
            let out = decoder.forward(&code, None, true)?;
            total += mse(out.data(), x)?;
            let g: Vec<f64> = out.data().iter().zip(x).map(|(o, t)| 2.0 * (o - t) / (dim as f64 * n)).collect();
            let dcode = decoder.backward(&g)?;
            let c = code.data()[0];
            let l1 = spec.sparsity * c.signum() / n;
            encoder.backward(&[dcode.data()[0] + l1])?;
        }
        recon = total / n;
        if recon < spec.target_mse {
            break;
        }
        encoder.adam_step(&mut adam_e)?;
        decoder.adam_step(&mut adam_d)?;
        it += 1;
    }
    let mut sae = Sae { coder, encoder, decoder, reconstruction_mse: recon, iterations: it, code_range: (0.0, 0.0) };
    let codes: Vec<f64> = xs.iter().map(|x| sae.encode_vector(x)).collect();
    sae.code_range = codes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    Ok(sae)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn football(att: u32) -> EventContext {
        EventContext::football(0, att)
    }

    #[test]
    fn repeated_context_is_exact() {
        let ctx = vec![football(20_000), football(20_000)];
        let sae = sae_train(&ctx, &SaeSpec::default(), 0).unwrap();
        let v = sae.coder.vector(&ctx[0]);
        assert_eq!(sae.decode(sae.encode(&ctx[0])), v);
        assert_eq!(sae.encode(&football(5_000)), sae.encode(&ctx[0]));
    }

    #[test]
    fn too_few_contexts() {
        assert!(sae_train(&[football(1)], &SaeSpec::default(), 0).is_err());
    }
}
