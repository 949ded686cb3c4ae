use thiserror::Error;

use crate::{analytics, arena, bco, forecast, nn, sim, trace};

/// Umbrella error for callers that chain several modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Trace(#[from] trace::TraceError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Analytics(#[from] analytics::AnalyticsError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Forecast(#[from] forecast::ForecastError),
    #[error(transparent)]
    Arena(#[from] arena::ArenaError),
    #[error(transparent)]
    Bco(#[from] bco::BcoError),
}
