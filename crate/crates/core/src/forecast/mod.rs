//! Active-user forecasters: ARIMA and the LSTM family.

pub mod arima;
mod neural;

use serde::{Deserialize, Serialize};

pub use arima::{
    arima_fit, arima_forecast, arima_grid_search, difference, difference_initials, undifference, ArimaModel, ArimaOrder,
    GridResult,
};
pub use neural::{
    build_forecaster, prepare_days, train_forecaster, walk_forward_validate, DayForecast, PreparedDays, TrainConfig,
    TrainedForecaster, WalkForward,
};

use crate::nn::NnError;
use crate::trace::{Feature, TraceError, EPOCHS_PER_DAY};

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("singular design matrix")]
    SingularDesign,
    #[error("empty grid: no order could be fitted")]
    EmptyGrid,
    #[error("invalid forecaster spec: {0}")]
    InvalidSpec(String),
    #[error("{0} is not a neural forecaster")]
    Unsupported(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForecastKind {
    Arima { p: usize, d: usize, q: usize },
    Lstm { units: usize },
    CnnLstm { units: usize, filters: usize },
    ConvLstm { units: usize, filters: usize },
}

impl ForecastKind {
    pub fn name(&self) -> &'static str {
        match self {
            ForecastKind::Arima { .. } => "arima",
            ForecastKind::Lstm { .. } => "lstm",
            ForecastKind::CnnLstm { .. } => "cnn-lstm",
            ForecastKind::ConvLstm { .. } => "conv-lstm",
        }
    }
}

pub const GRID_UNITS: [usize; 3] = [200, 300, 400];
pub const GRID_FILTERS: [usize; 3] = [64, 128, 256];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSpec {
    pub kind: ForecastKind,
    pub window_days: usize,
    pub horizon: usize,
    pub features: Vec<Feature>,
}

impl ForecastSpec {
    pub fn new(kind: ForecastKind) -> Self {
        Self { kind, window_days: 6, horizon: EPOCHS_PER_DAY as usize, features: Feature::DEFAULT.to_vec() }
    }

    pub fn input_len(&self) -> usize {
        self.window_days * EPOCHS_PER_DAY as usize
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidSpec(m.into()));
        if self.window_days == 0 {
            return bad("window_days must be >= 1");
        }
        if self.horizon != EPOCHS_PER_DAY as usize {
            return bad("horizon must be one day of epochs");
        }
        if self.features.is_empty() {
            return bad("at least one input feature is required");
        }
        match self.kind {
            ForecastKind::Lstm { units } | ForecastKind::CnnLstm { units, .. } | ForecastKind::ConvLstm { units, .. }
                if units == 0 =>
            {
                bad("units must be >= 1")
            }
            ForecastKind::CnnLstm { filters: 0, .. } | ForecastKind::ConvLstm { filters: 0, .. } => {
                bad("filters must be >= 1")
            }
            _ => Ok(()),
        }
    }

    /// True when units and filters lie on the published grid.
    pub fn in_reference_grid(&self) -> bool {
        match self.kind {
            ForecastKind::Arima { .. } => true,
            ForecastKind::Lstm { units } => GRID_UNITS.contains(&units),
            ForecastKind::CnnLstm { units, filters } | ForecastKind::ConvLstm { units, filters } => {
                GRID_UNITS.contains(&units) && GRID_FILTERS.contains(&filters)
            }
        }
    }
}

/// Errors over a set of forecast windows (one window per forecast day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mse: f64,
    pub max_abs_error: f64,
    pub window_mse: Vec<f64>,
    pub window_max_abs: Vec<f64>,
}

impl ErrorReport {
    pub fn from_windows(pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Self {
        let mut window_mse = Vec::with_capacity(pred.len());
        let mut window_max_abs = Vec::with_capacity(pred.len());
        let (mut sq, mut n) = (0.0, 0usize);
        for (p, a) in pred.iter().zip(actual) {
            let (mut s, mut m) = (0.0, 0.0f64);
            for (x, y) in p.iter().zip(a) {
                let e = x - y;
                s += e * e;
                m = m.max(e.abs());
            }
            sq += s;
            n += p.len();
            window_mse.push(s / p.len().max(1) as f64);
            window_max_abs.push(m);
        }
        Self {
            mse: if n == 0 { 0.0 } else { sq / n as f64 },
            max_abs_error: window_max_abs.iter().copied().fold(0.0, f64::max),
            window_mse,
            window_max_abs,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("window,mse,max_abs_error\n");
        for (i, (m, a)) in self.window_mse.iter().zip(&self.window_max_abs).enumerate() {
            s.push_str(&format!("{i},{m},{a}\n"));
        }
        s.push_str(&format!("all,{},{}\n", self.mse, self.max_abs_error));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_mse_is_mean_of_windows() {
        let p = vec![vec![1.0, 2.0], vec![0.0, 0.0]];
        let a = vec![vec![1.0, 0.0], vec![1.0, -1.0]];
        let r = ErrorReport::from_windows(&p, &a);
        assert_eq!(r.window_mse, vec![2.0, 1.0]);
        assert_eq!(r.mse, 1.5);
        assert_eq!(r.max_abs_error, 2.0);
    }

    #[test]
    fn grid_flag() {
        assert!(ForecastSpec::new(ForecastKind::CnnLstm { units: 200, filters: 64 }).in_reference_grid());
        assert!(!ForecastSpec::new(ForecastKind::Lstm { units: 16 }).in_reference_grid());
        assert!(ForecastSpec::new(ForecastKind::Lstm { units: 0 }).validate().is_err());
    }
}
