use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::arima::{arima_fit, ArimaModel};
use super::{ErrorReport, ForecastError, ForecastKind, ForecastSpec};
use crate::nn::{mse, mse_grad, Activation, AdamState, LayerSpec, ModelGraph, Padding, Tensor};
use crate::rng::{child_rng, derive_seed};
use crate::trace::{DayLabel, Feature, FeatureStats, SectorTrace, EPOCHS_PER_DAY};

const DAY: usize = EPOCHS_PER_DAY as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Chronological share of days used for the initial fit.
    pub train_fraction: f64,
    pub seed: u64,
    /// Epochs per walk-forward refit when warm starting.
    pub refit_epochs: usize,
    /// Continue from the previous day's weights instead of refitting from scratch.
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 50, learning_rate: 1e-3, batch_size: 1, train_fraction: 0.6, seed: 0, refit_epochs: 5, warm_start: true }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ForecastError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ForecastError::InvalidSpec(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(ForecastError::InvalidSpec("batch_size and learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Per-day normalized inputs and targets for one sector.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDays {
    pub stats: FeatureStats,
    pub days: Vec<u32>,
    pub labels: Vec<DayLabel>,
    /// Time-major `[epoch][feature]`, clamped into `[0, 1]`.
    pub inputs: Vec<Vec<f64>>,
    /// Scaled active users, not clamped.
    pub targets: Vec<Vec<f64>>,
    /// Number of leading days the statistics were fitted on.
    pub n_train: usize,
    pub window_days: usize,
}

impl PreparedDays {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    fn input_for(&self, k: usize) -> Vec<f64> {
        self.inputs[k - self.window_days..k].concat()
    }

    /// Users series of days `0..k` concatenated.
    fn history(&self, k: usize) -> Vec<f64> {
        self.targets[..k].concat()
    }

    pub fn unscale_users(&self, x: f64) -> f64 {
        self.stats.unscale(Feature::AvgUsers, x)
    }
}

/// Normalizes consecutive days of a sector; statistics come from the first
/// `n_train` days only.
pub fn prepare_days(spec: &ForecastSpec, days: &[SectorTrace], n_train: usize) -> Result<PreparedDays, ForecastError> {
    spec.validate()?;
    if n_train == 0 || n_train > days.len() {
        return Err(ForecastError::InsufficientData(format!("{n_train} training days of {}", days.len())));
    }
    for t in days {
        if t.len() != DAY {
            return Err(ForecastError::InsufficientData(format!(
                "day {:?} has {} epochs, expected {DAY}",
                t.day(),
                t.len()
            )));
        }
    }
    let mut feats = spec.features.clone();
    if !feats.contains(&Feature::AvgUsers) {
        feats.push(Feature::AvgUsers);
    }
    let stats = FeatureStats::fit(&feats, &days[..n_train])?;
    let ui = feats.iter().position(|&f| f == Feature::AvgUsers).expect("pushed above");
    let (umin, urange) = (stats.min[ui], stats.max[ui] - stats.min[ui]);
    let mut inputs = Vec::with_capacity(days.len());
    let mut targets = Vec::with_capacity(days.len());
    for t in days {
        let mut x = Vec::with_capacity(DAY * spec.features.len());
        let mut y = Vec::with_capacity(DAY);
        for (_, r) in &t.epochs {
            for &f in &spec.features {
                x.push(stats.scale(f, r.feature(f)?).0);
            }
            let u = r.avg_active_users;
            y.push(if urange > 0.0 { (u - umin) / urange } else { u - umin });
        }
        inputs.push(x);
        targets.push(y);
    }
    Ok(PreparedDays {
        stats,
        days: days.iter().map(|t| t.day().expect("non-empty")).collect(),
        labels: days.iter().map(|t| t.day_label).collect(),
        inputs,
        targets,
        n_train,
        window_days: spec.window_days,
    })
}

fn input_shape(spec: &ForecastSpec) -> Vec<usize> {
    let (t, f) = (spec.input_len(), spec.features.len());
    match spec.kind {
        ForecastKind::CnnLstm { .. } => vec![1, t, f],
        ForecastKind::ConvLstm { .. } => vec![t, 1, 1, f],
        _ => vec![t, f],
    }
}

/// Layer graph for a neural forecaster; ARIMA has none.
pub fn build_forecaster(spec: &ForecastSpec, seed: u64) -> Result<ModelGraph, ForecastError> {
    spec.validate()?;
    let head = LayerSpec::dense(spec.horizon, Activation::Linear);
    let layers = match spec.kind {
        ForecastKind::Arima { .. } => return Err(ForecastError::Unsupported(spec.kind.name().into())),
        ForecastKind::Lstm { units } => vec![LayerSpec::lstm(units, true), LayerSpec::lstm(units, false), head],
        ForecastKind::CnnLstm { units, filters } => {
            let conv =
                LayerSpec::Conv2D { filters, kernel: (3, 3), padding: Padding::Same, activation: Activation::Relu };
            vec![conv.clone(), conv, LayerSpec::lstm(units, false), head]
        }
        ForecastKind::ConvLstm { filters, .. } => vec![
            LayerSpec::ConvLstm { filters, kernel: (3, 3), return_sequences: false },
            LayerSpec::Flatten,
            head,
        ],
    };
    Ok(ModelGraph::new(input_shape(spec), 0, layers, seed)?)
}

#[derive(Debug, Clone)]
pub struct TrainedForecaster {
    pub spec: ForecastSpec,
    pub model: Option<ModelGraph>,
    pub arima: Option<ArimaModel>,
    /// Mean training loss per epoch of the last fit.
    pub loss_history: Vec<f64>,
}

impl TrainedForecaster {
    /// Normalized users forecast for day index `k` from days before it.
    pub fn predict_day(&self, data: &PreparedDays, k: usize) -> Result<Vec<f64>, ForecastError> {
        if k < data.window_days || k >= data.len() {
            return Err(ForecastError::InsufficientData(format!("no full input window for day index {k}")));
        }
        if let Some(m) = &self.model {
            let x = Tensor::new(input_shape(&self.spec), data.input_for(k))?;
            return Ok(m.predict(&x, None)?.into_data());
        }
        let a = self.arima.as_ref().expect("either model or arima is set");
        a.forecast_after(&data.history(k), self.spec.horizon)
    }
}

/// Trains on samples whose target day index lies in `targets`.
fn fit(
    model: &mut ModelGraph,
    spec: &ForecastSpec,
    data: &PreparedDays,
    targets: std::ops::Range<usize>,
    epochs: usize,
    cfg: &TrainConfig,
    stage: u64,
) -> Result<Vec<f64>, ForecastError> {
    let shape = input_shape(spec);
    let samples: Vec<(Tensor, &[f64])> = targets
        .map(|k| Ok((Tensor::new(shape.clone(), data.input_for(k))?, data.targets[k].as_slice())))
        .collect::<Result<_, ForecastError>>()?;
    if samples.is_empty() {
        return Err(ForecastError::InsufficientData("no training samples".into()));
    }
    let mut adam = AdamState::new(model.n_params(), cfg.learning_rate);
    let mut rng = child_rng(cfg.seed, &[stage]);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            for &i in batch {
                let (x, y) = &samples[i];
                let pred = model.forward(x, None, true)?;
                total += mse(pred.data(), y)?;
                let mut g = mse_grad(pred.data(), y)?;
                g.iter_mut().for_each(|v| *v /= batch.len() as f64);
                model.backward(&g)?;
            }
            model.adam_step(&mut adam)?;
        }
        history.push(total / samples.len() as f64);
    }
    Ok(history)
}

fn split(cfg: &TrainConfig, spec: &ForecastSpec, n_days: usize) -> Result<usize, ForecastError> {
    cfg.validate()?;
    let n_train = (n_days as f64 * cfg.train_fraction).floor() as usize;
    if n_train <= spec.window_days || n_train >= n_days {
        return Err(ForecastError::InsufficientData(format!(
            "{n_days} days give {n_train} training days; need more than {} and at least one validation day",
            spec.window_days
        )));
    }
    Ok(n_train)
}

fn initial_fit(spec: &ForecastSpec, data: &PreparedDays, cfg: &TrainConfig) -> Result<TrainedForecaster, ForecastError> {
    let n_train = data.n_train;
    match spec.kind {
        ForecastKind::Arima { p, d, q } => Ok(TrainedForecaster {
            spec: spec.clone(),
            model: None,
            arima: Some(arima_fit(&data.history(n_train), p, d, q)?),
            loss_history: vec![],
        }),
        _ => {
            let mut model = build_forecaster(spec, derive_seed(cfg.seed, &[0x1417]))?;
            let loss_history = fit(&mut model, spec, data, spec.window_days..n_train, cfg.epochs, cfg, 0)?;
            Ok(TrainedForecaster { spec: spec.clone(), model: Some(model), arima: None, loss_history })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayForecast {
    pub day: u32,
    pub label: DayLabel,
    /// Normalized users.
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
}

impl DayForecast {
    pub fn predicted_peak(&self) -> f64 {
        self.predicted.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn actual_peak(&self) -> f64 {
        self.actual.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn report(forecasts: &[DayForecast]) -> ErrorReport {
    let p: Vec<Vec<f64>> = forecasts.iter().map(|f| f.predicted.clone()).collect();
    let a: Vec<Vec<f64>> = forecasts.iter().map(|f| f.actual.clone()).collect();
    ErrorReport::from_windows(&p, &a)
}

/// Fits on the chronological prefix and reports on the remaining days with
/// the weights frozen.
pub fn train_forecaster(
    spec: &ForecastSpec,
    days: &[SectorTrace],
    cfg: &TrainConfig,
) -> Result<(TrainedForecaster, ErrorReport, Vec<DayForecast>), ForecastError> {
    let n_train = split(cfg, spec, days.len())?;
    let data = prepare_days(spec, days, n_train)?;
    let trained = initial_fit(spec, &data, cfg)?;
    let forecasts = (n_train..data.len())
        .map(|k| {
            Ok(DayForecast {
                day: data.days[k],
                label: data.labels[k],
                predicted: trained.predict_day(&data, k)?,
                actual: data.targets[k].clone(),
            })
        })
        .collect::<Result<Vec<_>, ForecastError>>()?;
    let r = report(&forecasts);
    Ok((trained, r, forecasts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkForward {
    pub report: ErrorReport,
    pub forecasts: Vec<DayForecast>,
}

/// Predicts each validation day after refitting on every day before it.
pub fn walk_forward_validate(
    spec: &ForecastSpec,
    days: &[SectorTrace],
    cfg: &TrainConfig,
) -> Result<WalkForward, ForecastError> {
    let n_train = split(cfg, spec, days.len())?;
    let data = prepare_days(spec, days, n_train)?;
    let mut trained = initial_fit(spec, &data, cfg)?;
    let mut forecasts = Vec::with_capacity(data.len() - n_train);
    for k in n_train..data.len() {
        if k > n_train {
            match spec.kind {
                ForecastKind::Arima { p, d, q } => trained.arima = Some(arima_fit(&data.history(k), p, d, q)?),
                _ => {
                    let (model, epochs) = if cfg.warm_start {
                        (trained.model.take().expect("neural"), cfg.refit_epochs)
                    } else {
                        (build_forecaster(spec, derive_seed(cfg.seed, &[0x1417]))?, cfg.epochs)
                    };
                    let mut model = model;
                    trained.loss_history = fit(&mut model, spec, &data, spec.window_days..k, epochs, cfg, k as u64)?;
                    trained.model = Some(model);
                }
            }
        }
        forecasts.push(DayForecast {
            day: data.days[k],
            label: data.labels[k],
            predicted: trained.predict_day(&data, k)?,
            actual: data.targets[k].clone(),
        });
    }
    Ok(WalkForward { report: report(&forecasts), forecasts })
}
