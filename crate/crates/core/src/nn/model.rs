use rand_chacha::ChaCha8Rng;

use super::layers::{Cache, Layer, LayerSpec};
use super::{NnError, Tensor};
use crate::rng::child_rng;

/// Names a contiguous range of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub layer: usize,
    pub start: usize,
    pub len: usize,
}

/// Sequential layer stack with an optional side-input vector consumed by
/// `ConcatSide`.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    input_shape: Vec<usize>,
    side_dim: usize,
    seed: u64,
    pub(crate) layers: Vec<Layer>,
    params: Vec<f64>,
    grads: Vec<f64>,
    cache: Option<Vec<Cache>>,
    rng: ChaCha8Rng,
}

fn check_input(shape: &[usize], input: &Tensor) -> Result<(), NnError> {
    if input.shape() != shape {
        return Err(NnError::Shape(format!("model expects input {shape:?}, got {:?}", input.shape())));
    }
    Ok(())
}

type Run = (Vec<f64>, Vec<Cache>);

fn run(
    layers: &[Layer],
    params: &[f64],
    input: &[f64],
    side: Option<&[f64]>,
    training: bool,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Run {
    let mut x = input.to_vec();
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let (y, c) = layer.forward(params, &x, side, training, rng.as_deref_mut());
        caches.push(c);
        x = y;
    }
    (x, caches)
}

impl ModelGraph {
    pub fn new(input_shape: Vec<usize>, side_dim: usize, specs: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(NnError::Shape(format!("invalid input shape {input_shape:?}")));
        }
        if specs.is_empty() {
            return Err(NnError::InvalidSpec("model needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.clone();
        let mut offset = 0;
        for (i, spec) in specs.into_iter().enumerate() {
            let l = Layer::build(spec, i, &shape, side_dim, offset)?;
            offset += l.n_params;
            shape = l.out_shape.clone();
            layers.push(l);
        }
        if side_dim > 0 && !layers.iter().any(|l| l.spec == LayerSpec::ConcatSide) {
            return Err(NnError::InvalidSpec("side input declared but no concat_side layer".into()));
        }
        let mut params = vec![0.0; offset];
        let mut init_rng = child_rng(seed, &[0]);
        for l in &layers {
            l.init(&mut params, &mut init_rng);
        }
        Ok(Self {
            input_shape,
            side_dim,
            seed,
            layers,
            grads: vec![0.0; offset],
            params,
            cache: None,
            rng: child_rng(seed, &[1]),
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.layers.last().expect("non-empty").out_shape
    }

    pub fn side_dim(&self) -> usize {
        self.side_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<(), NnError> {
        if p.len() != self.params.len() {
            return Err(NnError::Shape(format!("expected {} parameters, got {}", self.params.len(), p.len())));
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn zero_grad(&mut self) {
        self.grads.fill(0.0);
    }

    /// Reseeds the dropout stream.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.rng = child_rng(seed, &[1]);
    }

    pub fn param_blocks(&self) -> Vec<ParamBlock> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if l.n_params == 0 {
                continue;
            }
            let base = format!("layer {i} ({})", l.spec.name());
            out.push(ParamBlock { name: format!("{base} weights"), layer: i, start: l.offset, len: l.n_weights });
            out.push(ParamBlock {
                name: format!("{base} bias"),
                layer: i,
                start: l.offset + l.n_weights,
                len: l.n_params - l.n_weights,
            });
        }
        out
    }

    fn check(&self, input: &Tensor, side: Option<&[f64]>) -> Result<(), NnError> {
        check_input(&self.input_shape, input)?;
        match (self.side_dim, side) {
            (0, None) => Ok(()),
            (0, Some(_)) => Err(NnError::Shape("model takes no side input".into())),
            (n, Some(s)) if s.len() == n => Ok(()),
            (n, s) => Err(NnError::Shape(format!(
                "model expects side input of length {n}, got {}",
                s.map_or(0, <[f64]>::len)
            ))),
        }
    }

    /// Forward pass that caches activations for `backward`.
    pub fn forward(&mut self, input: &Tensor, side: Option<&[f64]>, training: bool) -> Result<Tensor, NnError> {
        self.check(input, side)?;
        let (y, caches) = run(&self.layers, &self.params, input.data(), side, training, Some(&mut self.rng));
        self.cache = Some(caches);
        Tensor::new(self.output_shape().to_vec(), y)
    }

    /// Inference without dropout; does not touch any mutable state.
    pub fn predict(&self, input: &Tensor, side: Option<&[f64]>) -> Result<Tensor, NnError> {
        self.check(input, side)?;
        let (y, _) = run(&self.layers, &self.params, input.data(), side, false, None);
        Tensor::new(self.output_shape().to_vec(), y)
    }

    /// Signature of every ReLU sign pattern on an eval pass.
    pub(crate) fn relu_signature(&self, params: &[f64], input: &Tensor, side: Option<&[f64]>) -> Vec<bool> {
        let (_, caches) = run(&self.layers, params, input.data(), side, false, None);
        let mut sig = Vec::new();
        for (l, c) in self.layers.iter().zip(&caches) {
            if let Some(z) = c.relu_pre(&l.spec) {
                sig.extend(z.iter().map(|&v| v > 0.0));
            }
        }
        sig
    }

    pub(crate) fn output_with(&self, params: &[f64], input: &Tensor, side: Option<&[f64]>) -> Vec<f64> {
        run(&self.layers, params, input.data(), side, false, None).0
    }

    /// Backpropagates `out_grad` (dLoss/dOutput) through the cached forward
    /// pass, accumulating into the gradient vector. Returns dLoss/dInput.
    pub fn backward(&mut self, out_grad: &[f64]) -> Result<Tensor, NnError> {
        let caches = self.cache.take().ok_or(NnError::BackwardBeforeForward)?;
        let out_len: usize = self.output_shape().iter().product();
        if out_grad.len() != out_len {
            return Err(NnError::Shape(format!("output gradient has {} values, output has {out_len}", out_grad.len())));
        }
        let mut g = out_grad.to_vec();
        for (l, c) in self.layers.iter().zip(&caches).rev() {
            g = l.backward(&self.params, c, &g, &mut self.grads);
        }
        Tensor::new(self.input_shape.clone(), g)
    }
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64, NnError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NnError::Shape(format!("mse on lengths {} and {}", pred.len(), target.len())));
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64)
}

pub fn mse_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>, NnError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NnError::Shape(format!("mse on lengths {} and {}", pred.len(), target.len())));
    }
    let k = 2.0 / pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(a, b)| k * (a - b)).collect())
}
