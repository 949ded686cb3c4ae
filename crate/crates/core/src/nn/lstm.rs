//! Standard (no-peephole) LSTM cell, gate order input, forget, candidate, output.

use super::activation::sigmoid;
use super::NnError;

/// Parameters of one LSTM cell: `weights` is `[4J, D + J]` row-major,
/// `bias` is `[4J]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub input_dim: usize,
    pub units: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, units: usize) -> Self {
        Self {
            input_dim,
            units,
            weights: vec![0.0; 4 * units * (input_dim + units)],
            bias: vec![0.0; 4 * units],
        }
    }

    pub fn n_params(input_dim: usize, units: usize) -> usize {
        4 * units * (input_dim + units) + 4 * units
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// Concatenated `[x_t; h_prev]`.
    pub xh: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`.
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One step from raw slices; returns `(h, c, cache)`.
pub(crate) fn step_raw(
    d: usize,
    j: usize,
    weights: &[f64],
    bias: &[f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, StepCache) {
    let n = d + j;
    let mut xh = Vec::with_capacity(n);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);
    let mut gates = bias.to_vec();
    for (r, g) in gates.iter_mut().enumerate() {
        let row = &weights[r * n..(r + 1) * n];
        *g += row.iter().zip(&xh).map(|(a, b)| a * b).sum::<f64>();
    }
    for (r, g) in gates.iter_mut().enumerate() {
        *g = if r / j == 2 { g.tanh() } else { sigmoid(*g) };
    }
    let mut c = vec![0.0; j];
    let mut h = vec![0.0; j];
    let mut tanh_c = vec![0.0; j];
    for u in 0..j {
        let (i, f, g, o) = (gates[u], gates[j + u], gates[2 * j + u], gates[3 * j + u]);
        c[u] = f * c_prev[u] + i * g;
        tanh_c[u] = c[u].tanh();
        h[u] = o * tanh_c[u];
    }
    let cache = StepCache { xh, c_prev: c_prev.to_vec(), gates, tanh_c };
    (h, c, cache)
}

/// Gate pre-activation gradients from the incoming `dh`/`dc`; also returns
/// the gradient flowing to `c_prev`.
pub(crate) fn gate_grads(j: usize, cache: &StepCache, dh: &[f64], dc: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = &cache.gates;
    let mut dz = vec![0.0; 4 * j];
    let mut dc_prev = vec![0.0; j];
    for u in 0..j {
        let (i, f, gg, o) = (g[u], g[j + u], g[2 * j + u], g[3 * j + u]);
        let tc = cache.tanh_c[u];
        let d_o = dh[u] * tc;
        let dct = dc[u] + dh[u] * o * (1.0 - tc * tc);
        let di = dct * gg;
        let dg = dct * i;
        let df = dct * cache.c_prev[u];
        dc_prev[u] = dct * f;
        dz[u] = di * i * (1.0 - i);
        dz[j + u] = df * f * (1.0 - f);
        dz[2 * j + u] = dg * (1.0 - gg * gg);
        dz[3 * j + u] = d_o * o * (1.0 - o);
    }
    (dz, dc_prev)
}

/// Backward through one step. Accumulates into `dw`/`db` and returns
/// `(dx, dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_backward(
    d: usize,
    j: usize,
    weights: &[f64],
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = d + j;
    let (dz, dc_prev) = gate_grads(j, cache, dh, dc);
    let mut dxh = vec![0.0; n];
    for (r, &g) in dz.iter().enumerate() {
        db[r] += g;
        if g == 0.0 {
            continue;
        }
        let row = &weights[r * n..(r + 1) * n];
        let drow = &mut dw[r * n..(r + 1) * n];
        for k in 0..n {
            drow[k] += g * cache.xh[k];
            dxh[k] += g * row[k];
        }
    }
    let dh_prev = dxh.split_off(d);
    (dxh, dh_prev, dc_prev)
}

/// Single LSTM update `(h_t, c_t)`.
pub fn lstm_step(
    params: &LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let (d, j) = (params.input_dim, params.units);
    if params.weights.len() != 4 * j * (d + j) || params.bias.len() != 4 * j {
        return Err(NnError::Shape(format!(
            "lstm parameters for D={d}, J={j} need {} weights and {} biases",
            4 * j * (d + j),
            4 * j
        )));
    }
    if x.len() != d || h_prev.len() != j || c_prev.len() != j {
        return Err(NnError::Shape(format!(
            "lstm step expects x[{d}], h[{j}], c[{j}], got x[{}], h[{}], c[{}]",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let (h, c, _) = step_raw(d, j, &params.weights, &params.bias, x, h_prev, c_prev);
    Ok((h, c))
}
