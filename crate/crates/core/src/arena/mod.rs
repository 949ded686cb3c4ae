//! Context-aware dual-head capacity model and its spectrum recommendation.

mod sae;
mod store;
mod train;

use serde::{Deserialize, Serialize};

pub use sae::{sae_train, ContextCoder, Sae, SaeSpec};
pub use store::{load_trained, save_trained};
pub use train::{
    arena_train, arena_train_sector, evaluate, regular_context, split_events, ArenaConfig, ArenaReport, EventWindow,
    TrainedArena, WindowPrediction, MIN_EVENTS,
};

use crate::analytics::AnalyticsError;
use crate::nn::{Activation, LayerSpec, ModelGraph, NnError, Padding};
use crate::trace::{Feature, SectorId, TraceError};


#[derive(Debug, thiserror::Error)]
pub enum ArenaError {
    #[error("need at least {needed} events, got {got}")]
    InsufficientEvents { needed: usize, got: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("saturation users must be positive, got {0}")]
    NonPositiveSaturation(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("window does not fit the day: {0}")]
    Window(String),
    #[error("no data for sector {0}")]
    UnknownSector(SectorId),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaSpec {
    pub conv_filters_1: usize,
    pub conv_filters_2: usize,
    pub dropout_p: f64,
    pub mlp_sizes: Vec<usize>,
    /// Output epochs per head.
    pub horizon: usize,
    /// Input snapshot length in epochs.
    pub input_epochs: usize,
    /// Epochs between the start of the output window and the event start.
    pub lead_epochs: usize,
    pub features: Vec<Feature>,
    pub padding: Padding,
}

impl Default for ArenaSpec {
    fn default() -> Self {
        Self {
            conv_filters_1: 64,
            conv_filters_2: 128,
            dropout_p: 0.2,
            mlp_sizes: vec![128, 64],
            horizon: 24,
            input_epochs: 24,
            lead_epochs: 8,
            features: Feature::DEFAULT.to_vec(),
            padding: Padding::Same,
        }
    }
}

impl ArenaSpec {
    pub fn validate(&self) -> Result<(), ArenaError> {
        let sizes = [self.conv_filters_1, self.conv_filters_2, self.horizon, self.input_epochs];
        if sizes.contains(&0) || self.mlp_sizes.contains(&0) || self.features.is_empty() {
            return Err(ArenaError::InvalidSpec("all sizes must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(ArenaError::InvalidSpec(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> Vec<usize> {
        vec![1, self.features.len(), self.input_epochs]
    }
}

/// CNN over the `F x T` snapshot, context code appended after flattening,
/// then the MLP emitting `[prb (T), users (T)]`.
pub fn arena_build(spec: &ArenaSpec, seed: u64) -> Result<ModelGraph, ArenaError> {
    spec.validate()?;
    let conv = |filters| LayerSpec::Conv2D { filters, kernel: (3, 3), padding: spec.padding, activation: Activation::Relu };
    let mut layers = vec![
        conv(spec.conv_filters_1),
        LayerSpec::Dropout { p: spec.dropout_p },
        conv(spec.conv_filters_2),
        LayerSpec::Dropout { p: spec.dropout_p },
        LayerSpec::Flatten,
        LayerSpec::ConcatSide,
    ];
    layers.extend(spec.mlp_sizes.iter().map(|&n| LayerSpec::dense(n, Activation::Relu)));
    layers.push(LayerSpec::dense(2 * spec.horizon, Activation::Linear));
    Ok(ModelGraph::new(spec.input_shape(), 1, layers, seed)?)
}

/// Both heads over the event window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaOutput {
    /// PRB utilization in `[0, 1]`.
    pub prb_forecast: Vec<f64>,
    /// Active users, non-negative.
    pub users_forecast: Vec<f64>,
}

impl ArenaOutput {
    /// Splits a raw head vector, clamping PRB into `[0, 1]` and users at 0.
    pub fn from_raw(raw: &[f64], unscale_users: impl Fn(f64) -> f64) -> Self {
        let t = raw.len() / 2;
        Self {
            prb_forecast: raw[..t].iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            users_forecast: raw[t..].iter().map(|&v| unscale_users(v).max(0.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPlan {
    pub sector: SectorId,
    /// Epoch index of the first plan entry within the day.
    pub first_epoch: u32,
    pub c_bar: Vec<f64>,
    pub users_hat: Vec<f64>,
    pub delta: Vec<f64>,
    /// Recommended share of provisioned PRBs; above 1 means extra spectrum.
    pub capacity: Vec<f64>,
    pub saturation_users: f64,
}

impl CapacityPlan {
    pub fn extra_needed(&self) -> Vec<bool> {
        self.capacity.iter().map(|&c| c > 1.0).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,c_bar,users_hat,delta,c_recommended,extra_needed\n");
        for i in 0..self.capacity.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.first_epoch as usize + i,
                self.c_bar[i],
                self.users_hat[i],
                self.delta[i],
                self.capacity[i],
                u8::from(self.capacity[i] > 1.0)
            ));
        }
        s
    }
}

/// `Ū / Ũ` elementwise.
pub fn compute_delta(users_forecast: &[f64], saturation_users: f64) -> Result<Vec<f64>, ArenaError> {
    if !(saturation_users > 0.0) {
        return Err(ArenaError::NonPositiveSaturation(saturation_users));
    }
    Ok(users_forecast.iter().map(|u| u / saturation_users).collect())
}

/// `c = c̄ · Δ` elementwise.
pub fn recommend_capacity(
    output: &ArenaOutput,
    saturation_users: f64,
    sector: SectorId,
    first_epoch: u32,
) -> Result<CapacityPlan, ArenaError> {
    if output.prb_forecast.len() != output.users_forecast.len() {
        return Err(ArenaError::LengthMismatch(output.prb_forecast.len(), output.users_forecast.len()));
    }
    let delta = compute_delta(&output.users_forecast, saturation_users)?;
    let capacity = output.prb_forecast.iter().zip(&delta).map(|(c, d)| c * d).collect();
    Ok(CapacityPlan {
        sector,
        first_epoch,
        c_bar: output.prb_forecast.clone(),
        users_hat: output.users_forecast.clone(),
        delta,
        capacity,
        saturation_users,
    })
}
