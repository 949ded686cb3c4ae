//! ConvLSTM cell: the LSTM affine maps become same-padded convolutions over
//! the stacked `[x_t; h_prev]` maps.

use super::activation::sigmoid;
use super::conv::{ConvGeom, Padding};
use super::NnError;

/// Kernel `[4Φ, C + Φ, kh, kw]` and bias `[4Φ]`, gate order as the LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmCellParams {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: (usize, usize),
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLstmCellParams {
    pub fn zeros(in_channels: usize, filters: usize, kernel: (usize, usize)) -> Self {
        Self {
            in_channels,
            filters,
            kernel,
            weights: vec![0.0; 4 * filters * (in_channels + filters) * kernel.0 * kernel.1],
            bias: vec![0.0; 4 * filters],
        }
    }

    pub fn n_params(in_channels: usize, filters: usize, kernel: (usize, usize)) -> usize {
        4 * filters * (in_channels + filters) * kernel.0 * kernel.1 + 4 * filters
    }
}

pub(crate) fn geom(c: usize, f: usize, kernel: (usize, usize), h: usize, w: usize) -> ConvGeom {
    ConvGeom { in_c: c + f, out_c: 4 * f, kh: kernel.0, kw: kernel.1, h, w, pad: Padding::Same }
}

#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// Padded `[x; h_prev]` stack.
    pub padded: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// `x` is `[C, H, W]`, states are `[Φ, H, W]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_raw(
    g: &ConvGeom,
    filters: usize,
    weights: &[f64],
    bias: &[f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, StepCache) {
    let mut stack = Vec::with_capacity(x.len() + h_prev.len());
    stack.extend_from_slice(x);
    stack.extend_from_slice(h_prev);
    let padded = g.pad_input(&stack);
    let mut gates = g.forward(&padded, weights, bias);
    let m = filters * g.h * g.w;
    for (r, v) in gates.iter_mut().enumerate() {
        *v = if r / m == 2 { v.tanh() } else { sigmoid(*v) };
    }
    let mut c = vec![0.0; m];
    let mut h = vec![0.0; m];
    let mut tanh_c = vec![0.0; m];
    for u in 0..m {
        let (i, f, gg, o) = (gates[u], gates[m + u], gates[2 * m + u], gates[3 * m + u]);
        c[u] = f * c_prev[u] + i * gg;
        tanh_c[u] = c[u].tanh();
        h[u] = o * tanh_c[u];
    }
    (h, c, StepCache { padded, c_prev: c_prev.to_vec(), gates, tanh_c })
}

/// Returns `(dx, dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_backward(
    g: &ConvGeom,
    in_channels: usize,
    weights: &[f64],
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = dh.len();
    let gs = &cache.gates;
    let mut dz = vec![0.0; 4 * m];
    let mut dc_prev = vec![0.0; m];
    for u in 0..m {
        let (i, f, gg, o) = (gs[u], gs[m + u], gs[2 * m + u], gs[3 * m + u]);
        let tc = cache.tanh_c[u];
        let dct = dc[u] + dh[u] * o * (1.0 - tc * tc);
        dc_prev[u] = dct * f;
        dz[u] = dct * gg * i * (1.0 - i);
        dz[m + u] = dct * cache.c_prev[u] * f * (1.0 - f);
        dz[2 * m + u] = dct * i * (1.0 - gg * gg);
        dz[3 * m + u] = dh[u] * tc * o * (1.0 - o);
    }
    let mut dstack = g.backward(&cache.padded, weights, &dz, dw, db);
    let dh_prev = dstack.split_off(in_channels * g.h * g.w);
    (dstack, dh_prev, dc_prev)
}

/// Single ConvLSTM update on `[C, H, W]` input and `[Φ, H, W]` states.
pub fn convlstm_step(
    params: &ConvLstmCellParams,
    height: usize,
    width: usize,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let (c, f, k) = (params.in_channels, params.filters, params.kernel);
    if k.0 == 0 || k.1 == 0 {
        return Err(NnError::InvalidSpec("kernel must be at least 1".into()));
    }
    let want = ConvLstmCellParams::n_params(c, f, k) - 4 * f;
    if params.weights.len() != want || params.bias.len() != 4 * f {
        return Err(NnError::Shape(format!(
            "convlstm parameters need {want} weights and {} biases",
            4 * f
        )));
    }
    let m = f * height * width;
    if x.len() != c * height * width || h_prev.len() != m || c_prev.len() != m {
        return Err(NnError::Shape(format!(
            "convlstm step expects x[{}], h[{m}], c[{m}], got x[{}], h[{}], c[{}]",
            c * height * width,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let g = geom(c, f, k, height, width);
    let (h, cc, _) = step_raw(&g, f, &params.weights, &params.bias, x, h_prev, c_prev);
    Ok((h, cc))
}
