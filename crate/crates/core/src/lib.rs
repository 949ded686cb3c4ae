//! Mass-event radio access network toolkit.
//!
//! The crate covers the whole chain from synthetic per-sector KPI traces to
//! spectrum recommendations:
//!
//! * [`trace`]: data model, QoS metric, snapshot slicing, normalization and IO.
//! * [`sim`]: stadium traffic generator that reproduces event-day signatures.
//! * [`analytics`]: correlation, peak-to-average and saturation analysis.
//! * [`nn`]: a small trainable layer graph with reverse-mode gradients and Adam.
//! * [`forecast`]: ARIMA and LSTM-family forecasters with walk-forward validation.
//! * [`arena`]: the dual-head context-aware capacity model and the PRB plan.
//! * [`bco`]: online primal-dual solver with one-point bandit gradients.

pub mod analytics;
pub mod arena;
pub mod bco;
pub mod forecast;
pub mod nn;
pub mod par;
pub mod rng;
pub mod sim;
pub mod trace;

mod error;

pub use error::Error;
