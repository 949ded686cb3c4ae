use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::{apply_into, backprop, Activation};
use super::conv::{ConvGeom, Padding};
use super::{convlstm, lstm, NnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize, activation: Activation },
    Conv2D { filters: usize, kernel: (usize, usize), padding: Padding, activation: Activation },
    Lstm { units: usize, return_sequences: bool },
    ConvLstm { filters: usize, kernel: (usize, usize), return_sequences: bool },
    Dropout { p: f64 },
    Flatten,
    Activation { activation: Activation },
    /// Appends the side input vector to a rank-1 activation.
    ConcatSide,
}

impl LayerSpec {
    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation }
    }

    /// 3x3, valid padding.
    pub fn conv2d(filters: usize, activation: Activation) -> Self {
        LayerSpec::Conv2D { filters, kernel: (3, 3), padding: Padding::Valid, activation }
    }

    pub fn lstm(units: usize, return_sequences: bool) -> Self {
        LayerSpec::Lstm { units, return_sequences }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2D { .. } => "conv2d",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::ConvLstm { .. } => "convlstm",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::ConcatSide => "concat_side",
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidSpec(m));
        match *self {
            LayerSpec::Dense { units, .. } | LayerSpec::Lstm { units, .. } if units == 0 => {
                bad(format!("{}: units must be >= 1", self.name()))
            }
            LayerSpec::Conv2D { filters, kernel, .. } | LayerSpec::ConvLstm { filters, kernel, .. } => {
                if filters == 0 {
                    bad(format!("{}: filters must be >= 1", self.name()))
                } else if kernel.0 == 0 || kernel.1 == 0 {
                    bad(format!("{}: kernel must be >= 1", self.name()))
                } else {
                    Ok(())
                }
            }
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => bad(format!("dropout: p={p} outside [0, 1)")),
            _ => Ok(()),
        }
    }
}

/// A spec resolved against its input shape.
#[derive(Debug, Clone)]
pub(crate) struct Layer {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub offset: usize,
    pub n_params: usize,
    /// Split point between weights and biases inside the block.
    pub n_weights: usize,
    pub fan_in: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Dense { x: Vec<f64>, z: Vec<f64>, y: Vec<f64> },
    Conv { padded: Vec<f64>, z: Vec<f64>, y: Vec<f64> },
    Lstm(Vec<lstm::StepCache>),
    ConvLstm(Vec<convlstm::StepCache>),
    Dropout(Option<Vec<f64>>),
    Flatten,
    Act { z: Vec<f64>, y: Vec<f64> },
    Concat,
}

impl Cache {
    /// Pre-activations passed through a ReLU, used for kink detection.
    pub fn relu_pre(&self, spec: &LayerSpec) -> Option<&[f64]> {
        match (self, spec) {
            (Cache::Dense { z, .. }, LayerSpec::Dense { activation: Activation::Relu, .. })
            | (Cache::Conv { z, .. }, LayerSpec::Conv2D { activation: Activation::Relu, .. })
            | (Cache::Act { z, .. }, LayerSpec::Activation { activation: Activation::Relu }) => Some(z),
            _ => None,
        }
    }
}

fn shape_err(spec: &LayerSpec, idx: usize, want: &str, got: &[usize]) -> NnError {
    NnError::Shape(format!("layer {idx} ({}) expects {want} input, got {got:?}", spec.name()))
}

impl Layer {
    pub fn build(spec: LayerSpec, idx: usize, in_shape: &[usize], side_dim: usize, offset: usize) -> Result<Self, NnError> {
        spec.validate()?;
        let in_shape = in_shape.to_vec();
        let (out_shape, n_weights, n_bias, fan_in) = match spec {
            LayerSpec::Dense { units, .. } => {
                if in_shape.len() != 1 {
                    return Err(shape_err(&spec, idx, "rank-1", &in_shape));
                }
                (vec![units], units * in_shape[0], units, in_shape[0])
            }
            LayerSpec::Conv2D { filters, kernel, padding, .. } => {
                if in_shape.len() != 3 {
                    return Err(shape_err(&spec, idx, "[channels, height, width]", &in_shape));
                }
                let g = ConvGeom {
                    in_c: in_shape[0],
                    out_c: filters,
                    kh: kernel.0,
                    kw: kernel.1,
                    h: in_shape[1],
                    w: in_shape[2],
                    pad: padding,
                };
                let (ho, wo) = g.out_hw().ok_or_else(|| {
                    NnError::Shape(format!(
                        "layer {idx} (conv2d): kernel {}x{} does not fit {:?} with {:?} padding",
                        kernel.0, kernel.1, in_shape, padding
                    ))
                })?;
                (vec![filters, ho, wo], g.n_weights(), filters, in_shape[0] * kernel.0 * kernel.1)
            }
            LayerSpec::Lstm { units, return_sequences } => {
                let (t, d) = match in_shape.len() {
                    2 => (in_shape[0], in_shape[1]),
                    3 => (in_shape[1], in_shape[0] * in_shape[2]),
                    _ => return Err(shape_err(&spec, idx, "[time, features] or [channels, time, width]", &in_shape)),
                };
                let out = if return_sequences { vec![t, units] } else { vec![units] };
                (out, 4 * units * (d + units), 4 * units, d + units)
            }
            LayerSpec::ConvLstm { filters, kernel, return_sequences } => {
                if in_shape.len() != 4 {
                    return Err(shape_err(&spec, idx, "[time, channels, height, width]", &in_shape));
                }
                let (t, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
                let out = if return_sequences { vec![t, filters, h, w] } else { vec![filters, h, w] };
                let nw = 4 * filters * (c + filters) * kernel.0 * kernel.1;
                (out, nw, 4 * filters, (c + filters) * kernel.0 * kernel.1)
            }
            LayerSpec::Dropout { .. } | LayerSpec::Activation { .. } => (in_shape.clone(), 0, 0, 0),
            LayerSpec::Flatten => (vec![in_shape.iter().product()], 0, 0, 0),
            LayerSpec::ConcatSide => {
                if in_shape.len() != 1 {
                    return Err(shape_err(&spec, idx, "rank-1", &in_shape));
                }
                if side_dim == 0 {
                    return Err(NnError::InvalidSpec(format!("layer {idx} (concat_side): model has no side input")));
                }
                (vec![in_shape[0] + side_dim], 0, 0, 0)
            }
        };
        Ok(Layer { spec, in_shape, out_shape, offset, n_params: n_weights + n_bias, n_weights, fan_in })
    }

    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        if self.n_params == 0 {
            return;
        }
        let block = &mut params[self.offset..self.offset + self.n_params];
        let (w, b) = block.split_at_mut(self.n_weights);
        let limit = match self.spec {
            LayerSpec::Dense { activation: Activation::Relu, .. } | LayerSpec::Conv2D { activation: Activation::Relu, .. } => {
                (6.0 / self.fan_in as f64).sqrt()
            }
            LayerSpec::Dense { .. } | LayerSpec::Conv2D { .. } => (3.0 / self.fan_in as f64).sqrt(),
            _ => 1.0 / (self.fan_in as f64).sqrt(),
        };
        for v in w.iter_mut() {
            *v = rng.gen_range(-limit..limit);
        }
        b.fill(0.0);
        let units = match self.spec {
            LayerSpec::Lstm { units, .. } => units,
            LayerSpec::ConvLstm { filters, .. } => filters,
            _ => 0,
        };
        b[units..2 * units].fill(1.0);
    }

    fn conv_geom(&self) -> ConvGeom {
        match self.spec {
            LayerSpec::Conv2D { filters, kernel, padding, .. } => ConvGeom {
                in_c: self.in_shape[0],
                out_c: filters,
                kh: kernel.0,
                kw: kernel.1,
                h: self.in_shape[1],
                w: self.in_shape[2],
                pad: padding,
            },
            _ => unreachable!(),
        }
    }

    /// Returns the output data and the cache needed by `backward`.
    pub fn forward(
        &self,
        params: &[f64],
        x: &[f64],
        side: Option<&[f64]>,
        training: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (Vec<f64>, Cache) {
        let block = &params[self.offset..self.offset + self.n_params];
        let (w, b) = block.split_at(self.n_weights);
        match self.spec {
            LayerSpec::Dense { units, activation } => {
                let n = x.len();
                let z: Vec<f64> = (0..units)
                    .map(|o| b[o] + w[o * n..(o + 1) * n].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
                    .collect();
                let y = apply_into(activation, &z);
                (y.clone(), Cache::Dense { x: x.to_vec(), z, y })
            }
            LayerSpec::Conv2D { activation, .. } => {
                let g = self.conv_geom();
                let padded = g.pad_input(x);
                let z = g.forward(&padded, w, b);
                let y = apply_into(activation, &z);
                (y.clone(), Cache::Conv { padded, z, y })
            }
            LayerSpec::Lstm { units: j, return_sequences } => {
                let (t_len, d) = self.lstm_dims();
                let mut h = vec![0.0; j];
                let mut c = vec![0.0; j];
                let mut out = Vec::with_capacity(if return_sequences { t_len * j } else { j });
                let mut caches = Vec::with_capacity(t_len);
                for t in 0..t_len {
                    let xt = self.lstm_gather(x, t);
                    let (h2, c2, sc) = lstm::step_raw(d, j, w, b, &xt, &h, &c);
                    h = h2;
                    c = c2;
                    caches.push(sc);
                    if return_sequences {
                        out.extend_from_slice(&h);
                    }
                }
                if !return_sequences {
                    out = h;
                }
                (out, Cache::Lstm(caches))
            }
            LayerSpec::ConvLstm { filters, kernel, return_sequences } => {
                let (t_len, c_in, hh, ww) = (self.in_shape[0], self.in_shape[1], self.in_shape[2], self.in_shape[3]);
                let g = convlstm::geom(c_in, filters, kernel, hh, ww);
                let m = filters * hh * ww;
                let step = c_in * hh * ww;
                let mut h = vec![0.0; m];
                let mut c = vec![0.0; m];
                let mut out = Vec::new();
                let mut caches = Vec::with_capacity(t_len);
                for t in 0..t_len {
                    let (h2, c2, sc) = convlstm::step_raw(&g, filters, w, b, &x[t * step..(t + 1) * step], &h, &c);
                    h = h2;
                    c = c2;
                    caches.push(sc);
                    if return_sequences {
                        out.extend_from_slice(&h);
                    }
                }
                if !return_sequences {
                    out = h;
                }
                (out, Cache::ConvLstm(caches))
            }
            LayerSpec::Dropout { p } => {
                if !training || p == 0.0 {
                    return (x.to_vec(), Cache::Dropout(None));
                }
                let rng = rng.expect("training forward carries an rng");
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = x.iter().map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
                let y = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
                (y, Cache::Dropout(Some(mask)))
            }
            LayerSpec::Flatten => (x.to_vec(), Cache::Flatten),
            LayerSpec::Activation { activation } => {
                let y = apply_into(activation, x);
                (y.clone(), Cache::Act { z: x.to_vec(), y })
            }
            LayerSpec::ConcatSide => {
                let mut y = x.to_vec();
                y.extend_from_slice(side.expect("side input checked by the model"));
                (y, Cache::Concat)
            }
        }
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, params: &[f64], cache: &Cache, dy: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let block = &params[self.offset..self.offset + self.n_params];
        let (w, _) = block.split_at(self.n_weights);
        let gblock = &mut grads[self.offset..self.offset + self.n_params];
        let (dw, db) = gblock.split_at_mut(self.n_weights);
        match (&self.spec, cache) {
            (LayerSpec::Dense { units, activation }, Cache::Dense { x, z, y }) => {
                let dz = backprop(*activation, z, y, dy);
                let n = x.len();
                let mut dx = vec![0.0; n];
                for o in 0..*units {
                    let g = dz[o];
                    db[o] += g;
                    let row = &w[o * n..(o + 1) * n];
                    let drow = &mut dw[o * n..(o + 1) * n];
                    for k in 0..n {
                        drow[k] += g * x[k];
                        dx[k] += g * row[k];
                    }
                }
                dx
            }
            (LayerSpec::Conv2D { activation, .. }, Cache::Conv { padded, z, y }) => {
                let dz = backprop(*activation, z, y, dy);
                self.conv_geom().backward(padded, w, &dz, dw, db)
            }
            (LayerSpec::Lstm { units, return_sequences }, Cache::Lstm(caches)) => {
                let j = *units;
                let (t_len, d) = self.lstm_dims();
                let mut dx = vec![0.0; self.in_shape.iter().product()];
                let mut dh_next = vec![0.0; j];
                let mut dc = vec![0.0; j];
                for t in (0..t_len).rev() {
                    let mut dh = dh_next;
                    if *return_sequences {
                        for (a, g) in dh.iter_mut().zip(&dy[t * j..(t + 1) * j]) {
                            *a += g;
                        }
                    } else if t == t_len - 1 {
                        for (a, g) in dh.iter_mut().zip(dy) {
                            *a += g;
                        }
                    }
                    let (dxt, dhp, dcp) = lstm::step_backward(d, j, w, &caches[t], &dh, &dc, dw, db);
                    self.lstm_scatter(&mut dx, t, &dxt);
                    dh_next = dhp;
                    dc = dcp;
                }
                dx
            }
            (LayerSpec::ConvLstm { filters, kernel, return_sequences }, Cache::ConvLstm(caches)) => {
                let (t_len, c_in, hh, ww) = (self.in_shape[0], self.in_shape[1], self.in_shape[2], self.in_shape[3]);
                let g = convlstm::geom(c_in, *filters, *kernel, hh, ww);
                let m = filters * hh * ww;
                let step = c_in * hh * ww;
                let mut dx = vec![0.0; t_len * step];
                let mut dh_next = vec![0.0; m];
                let mut dc = vec![0.0; m];
                for t in (0..t_len).rev() {
                    let mut dh = dh_next;
                    if *return_sequences {
                        for (a, gv) in dh.iter_mut().zip(&dy[t * m..(t + 1) * m]) {
                            *a += gv;
                        }
                    } else if t == t_len - 1 {
                        for (a, gv) in dh.iter_mut().zip(dy) {
                            *a += gv;
                        }
                    }
                    let (dxt, dhp, dcp) = convlstm::step_backward(&g, c_in, w, &caches[t], &dh, &dc, dw, db);
                    dx[t * step..(t + 1) * step].copy_from_slice(&dxt);
                    dh_next = dhp;
                    dc = dcp;
                }
                dx
            }
            (LayerSpec::Dropout { .. }, Cache::Dropout(mask)) => match mask {
                Some(m) => dy.iter().zip(m).map(|(g, m)| g * m).collect(),
                None => dy.to_vec(),
            },
            (LayerSpec::Flatten, Cache::Flatten) => dy.to_vec(),
            (LayerSpec::Activation { activation }, Cache::Act { z, y }) => backprop(*activation, z, y, dy),
            (LayerSpec::ConcatSide, Cache::Concat) => dy[..self.in_shape[0]].to_vec(),
            _ => unreachable!("cache kind always matches its layer"),
        }
    }

    fn lstm_dims(&self) -> (usize, usize) {
        if self.in_shape.len() == 2 {
            (self.in_shape[0], self.in_shape[1])
        } else {
            (self.in_shape[1], self.in_shape[0] * self.in_shape[2])
        }
    }

    /// Step input at time `t`; rank-3 input is `[channels, time, width]`.
    fn lstm_gather(&self, x: &[f64], t: usize) -> Vec<f64> {
        if self.in_shape.len() == 2 {
            let d = self.in_shape[1];
            return x[t * d..(t + 1) * d].to_vec();
        }
        let (c, tl, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let mut out = Vec::with_capacity(c * w);
        for ch in 0..c {
            out.extend_from_slice(&x[(ch * tl + t) * w..][..w]);
        }
        out
    }

    fn lstm_scatter(&self, dx: &mut [f64], t: usize, dxt: &[f64]) {
        if self.in_shape.len() == 2 {
            let d = self.in_shape[1];
            dx[t * d..(t + 1) * d].copy_from_slice(dxt);
            return;
        }
        let (c, tl, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        for ch in 0..c {
            dx[(ch * tl + t) * w..][..w].copy_from_slice(&dxt[ch * w..(ch + 1) * w]);
        }
    }
}
