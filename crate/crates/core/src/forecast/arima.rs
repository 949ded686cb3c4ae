//! Non-seasonal ARIMA: OLS for pure AR, Hannan-Rissanen start plus
//! Gauss-Newton conditional sum of squares when `q > 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::par::{self, Execution};

/// `d`-fold first differences.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    if d >= series.len() {
        return Err(ForecastError::InsufficientData(format!("cannot difference {} values {d} times", series.len())));
    }
    let mut s = series.to_vec();
    for _ in 0..d {
        s = s.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(s)
}

/// First value of each differencing level `0..d`, as needed by [`undifference`].
pub fn difference_initials(series: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        out.push(difference(series, k)?[0]);
    }
    Ok(out)
}

/// Inverse of [`difference`] given the level initials.
pub fn undifference(diffed: &[f64], d: usize, initials: &[f64]) -> Result<Vec<f64>, ForecastError> {
    if initials.len() != d {
        return Err(ForecastError::InvalidSpec(format!("need {d} initial values, got {}", initials.len())));
    }
    let mut s = diffed.to_vec();
    for k in (0..d).rev() {
        let mut out = Vec::with_capacity(s.len() + 1);
        let mut acc = initials[k];
        out.push(acc);
        for v in &s {
            acc += v;
            out.push(acc);
        }
        s = out;
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    /// Mean of the differenced series.
    pub mean: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    /// Residual variance.
    pub sigma2: f64,
    /// Last observed values of the original series, for integration.
    tail: Vec<f64>,
    /// Centered differenced values and residuals up to the end of the fit.
    z_tail: Vec<f64>,
    e_tail: Vec<f64>,
}

fn check_finite(series: &[f64]) -> Result<(), ForecastError> {
    match series.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(ForecastError::NonFinite(i)),
        None => Ok(()),
    }
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, ForecastError> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let chol = xtx.clone().cholesky().ok_or(ForecastError::SingularDesign)?;
    // reject numerically rank-deficient designs
    let diag_max = (0..xtx.nrows()).map(|i| xtx[(i, i)]).fold(0.0, f64::max);
    let l_min = (0..xtx.nrows()).map(|i| chol.l_dirty()[(i, i)]).fold(f64::INFINITY, f64::min);
    if l_min * l_min <= 1e-12 * diag_max {
        return Err(ForecastError::SingularDesign);
    }
    Ok(chol.solve(&xty))
}

/// Residuals of the ARMA recursion on centered `z`, zero pre-sample values.
fn css_residuals(z: &[f64], phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let start = phi.len();
    let mut e = vec![0.0; z.len()];
    for t in start..z.len() {
        let mut pred = 0.0;
        for (i, ph) in phi.iter().enumerate() {
            pred += ph * z[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                pred += th * e[t - 1 - j];
            }
        }
        e[t] = z[t] - pred;
    }
    e
}

fn sse(e: &[f64], start: usize) -> f64 {
    e[start..].iter().map(|v| v * v).sum()
}

fn fit_ar(z: &[f64], p: usize) -> Result<Vec<f64>, ForecastError> {
    if p == 0 {
        return Ok(vec![]);
    }
    let rows = z.len() - p;
    let x = DMatrix::from_fn(rows, p, |r, c| z[r + p - 1 - c]);
    let y = DVector::from_fn(rows, |r, _| z[r + p]);
    Ok(least_squares(&x, &y)?.iter().copied().collect())
}

fn fit_arma(z: &[f64], p: usize, q: usize) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
    // Hannan-Rissanen: long AR for innovations, then regress on both lags
    let m = (p + q + 2).max((z.len() / 20).min(20));
    let long = fit_ar(z, m)?;
    let mut ehat = vec![0.0; z.len()];
    for t in m..z.len() {
        ehat[t] = z[t] - long.iter().enumerate().map(|(i, a)| a * z[t - 1 - i]).sum::<f64>();
    }
    let start = m + q;
    let rows = z.len() - start;
    let x = DMatrix::from_fn(rows, p + q, |r, c| {
        let t = r + start;
        if c < p {
            z[t - 1 - c]
        } else {
            ehat[t - 1 - (c - p)]
        }
    });
    let y = DVector::from_fn(rows, |r, _| z[r + start]);
    let b = least_squares(&x, &y)?;
    let mut phi: Vec<f64> = b.iter().take(p).copied().collect();
    let mut theta: Vec<f64> = b.iter().skip(p).map(|v| v.clamp(-0.98, 0.98)).collect();

    // Gauss-Newton on the conditional sum of squares with step halving
    let k = p + q;
    let mut e = css_residuals(z, &phi, &theta);
    let mut cur = sse(&e, p);
    for _ in 0..50 {
        // de/dparam by recursion
        let n = z.len();
        let mut jac = vec![vec![0.0; k]; n];
        for t in p..n {
            for c in 0..k {
                let mut v = if c < p { -z[t - 1 - c] } else if t > c - p { -e[t - 1 - (c - p)] } else { 0.0 };
                for (j, th) in theta.iter().enumerate() {
                    if t > j {
                        v -= th * jac[t - 1 - j][c];
                    }
                }
                jac[t][c] = v;
            }
        }
        let rows = n - p;
        let jm = DMatrix::from_fn(rows, k, |r, c| jac[r + p][c]);
        let ev = DVector::from_fn(rows, |r, _| e[r + p]);
        let Ok(step) = least_squares(&jm, &ev) else { break };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let np: Vec<f64> = (0..p).map(|i| phi[i] - scale * step[i]).collect();
            let nt: Vec<f64> = (0..q).map(|j| theta[j] - scale * step[p + j]).collect();
            if nt.iter().all(|t| t.abs() < 1.0) {
                let ne = css_residuals(z, &np, &nt);
                let ns = sse(&ne, p);
                if ns.is_finite() && ns < cur {
                    let rel = (cur - ns) / cur.max(f64::MIN_POSITIVE);
                    phi = np;
                    theta = nt;
                    e = ne;
                    cur = ns;
                    improved = rel > 1e-10;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((phi, theta))
}

/// Fits ARIMA(p, d, q) to `series`.
pub fn arima_fit(series: &[f64], p: usize, d: usize, q: usize) -> Result<ArimaModel, ForecastError> {
    check_finite(series)?;
    let w = difference(series, d)?;
    let need = 10 * (p + q + 1);
    if w.len() < need {
        return Err(ForecastError::InsufficientData(format!(
            "ARIMA({p},{d},{q}) needs {need} values after differencing, got {}",
            w.len()
        )));
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let z: Vec<f64> = w.iter().map(|v| v - mean).collect();
    let constant = z.iter().all(|v| v.abs() <= 1e-12 * mean.abs().max(1.0));
    let (phi, theta) = if constant {
        (vec![0.0; p], vec![0.0; q])
    } else if q == 0 {
        (fit_ar(&z, p)?, vec![])
    } else {
        fit_arma(&z, p, q)?
    };
    let e = css_residuals(&z, &phi, &theta);
    let sigma2 = sse(&e, p) / (z.len() - p).max(1) as f64;
    let keep = p.max(q).max(1);
    Ok(ArimaModel {
        p,
        d,
        q,
        mean,
        phi,
        theta,
        sigma2,
        tail: series[series.len() - (d + 1).min(series.len())..].to_vec(),
        z_tail: z[z.len().saturating_sub(keep)..].to_vec(),
        e_tail: e[e.len().saturating_sub(keep)..].to_vec(),
    })
}

impl ArimaModel {
    fn recurse(&self, z_hist: &[f64], e_hist: &[f64], n_steps: usize) -> Vec<f64> {
        let mut z = z_hist.to_vec();
        let mut e = e_hist.to_vec();
        let mut out = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            let t = z.len();
            let mut pred = 0.0;
            for (i, ph) in self.phi.iter().enumerate() {
                if t > i {
                    pred += ph * z[t - 1 - i];
                }
            }
            for (j, th) in self.theta.iter().enumerate() {
                if t > j {
                    pred += th * e[t - 1 - j];
                }
            }
            z.push(pred);
            e.push(0.0);
            out.push(pred + self.mean);
        }
        out
    }

    /// Integrates differenced forecasts onto the last `d + 1` observations.
    fn integrate(&self, w_fc: &[f64], tail: &[f64]) -> Vec<f64> {
        if self.d == 0 {
            return w_fc.to_vec();
        }
        // last value of each differencing level
        let mut lasts = Vec::with_capacity(self.d);
        let mut level = tail.to_vec();
        for _ in 0..self.d {
            lasts.push(*level.last().expect("tail holds d + 1 values"));
            level = level.windows(2).map(|w| w[1] - w[0]).collect();
        }
        let mut s = w_fc.to_vec();
        for k in (0..self.d).rev() {
            let mut acc = lasts[k];
            for v in s.iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        s
    }

    /// Forecasts `n_steps` past the end of the fitted series.
    pub fn forecast(&self, n_steps: usize) -> Vec<f64> {
        let w = self.recurse(&self.z_tail, &self.e_tail, n_steps);
        self.integrate(&w, &self.tail)
    }

    /// Forecasts past the end of `history` with the fitted coefficients.
    pub fn forecast_after(&self, history: &[f64], n_steps: usize) -> Result<Vec<f64>, ForecastError> {
        check_finite(history)?;
        let w = difference(history, self.d)?;
        let z: Vec<f64> = w.iter().map(|v| v - self.mean).collect();
        let e = css_residuals(&z, &self.phi, &self.theta);
        let fc = self.recurse(&z, &e, n_steps);
        Ok(self.integrate(&fc, &history[history.len() - self.d - 1..]))
    }

    /// One-step-ahead errors `x_t - x̂_t` for every `t >= from`.
    ///
    /// Differencing is linear in past values, so the original-scale error
    /// equals the differenced-scale error.
    pub fn one_step_errors(&self, series: &[f64], from: usize) -> Result<Vec<f64>, ForecastError> {
        check_finite(series)?;
        let w = difference(series, self.d)?;
        let z: Vec<f64> = w.iter().map(|v| v - self.mean).collect();
        let e = css_residuals(&z, &self.phi, &self.theta);
        Ok(e.into_iter().enumerate().filter(|(i, _)| i + self.d >= from).map(|(_, v)| v).collect())
    }
}

/// Forecast `n_steps` ahead of the fitted series.
pub fn arima_forecast(model: &ArimaModel, n_steps: usize) -> Vec<f64> {
    model.forecast(n_steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ArimaOrder,
    pub best_mse: f64,
    /// Every cell with its validation MSE; `None` when the fit failed.
    pub cells: Vec<(ArimaOrder, Option<f64>)>,
}

/// Fraction of the series used for fitting inside the grid search.
pub const GRID_FIT_FRACTION: f64 = 0.6;

/// Exhaustive search of `p <= p_max`, `d <= d_max`, `q <= q_max` ranked by
/// one-step-ahead MSE on the last 40% of the series.
pub fn arima_grid_search(
    series: &[f64],
    p_max: usize,
    d_max: usize,
    q_max: usize,
    exec: Execution,
) -> Result<GridResult, ForecastError> {
    check_finite(series)?;
    let split = (series.len() as f64 * GRID_FIT_FRACTION).floor() as usize;
    if split < 2 || split >= series.len() {
        return Err(ForecastError::InsufficientData(format!("{} values are too few for a grid search", series.len())));
    }
    let orders: Vec<ArimaOrder> = (0..=d_max)
        .flat_map(|d| (0..=p_max).flat_map(move |p| (0..=q_max).map(move |q| ArimaOrder { p, d, q })))
        .collect();
    let cells = par::map(exec, &orders, |o| {
        let m = arima_fit(&series[..split], o.p, o.d, o.q).ok()?;
        let errs = m.one_step_errors(series, split).ok()?;
        let mse = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
        mse.is_finite().then_some(mse)
    });
    let cells: Vec<(ArimaOrder, Option<f64>)> = orders.into_iter().zip(cells).collect();
    let best = cells
        .iter()
        .filter_map(|(o, m)| m.map(|m| (*o, m)))
        .min_by(|(a, ma), (b, mb)| ma.total_cmp(mb).then((a.p + a.q).cmp(&(b.p + b.q))).then(a.d.cmp(&b.d)))
        .ok_or(ForecastError::EmptyGrid)?;
    Ok(GridResult { best: best.0, best_mse: best.1, cells })
}
