//! Per-sector training, held-out evaluation and recommendation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{arena_build, recommend_capacity, sae_train, ArenaError, ArenaOutput, ArenaSpec, CapacityPlan, Sae, SaeSpec};
use crate::analytics::{estimate_saturation_users, SaturationEstimate};
use crate::forecast::ErrorReport;
use crate::nn::{mse, mse_grad, AdamState, ModelGraph, Tensor};
use crate::par::{self, Execution};
use crate::rng::{child_rng, derive_seed};
use crate::trace::{
    normalize, slice_snapshot, Dataset, DayLabel, Epoch, EventContext, Feature, FeatureStats, SectorId, SectorTrace,
    EPOCHS_PER_DAY,
};

pub const MIN_EVENTS: usize = 5;
const UTIL_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Chronological share of events used for training.
    pub train_fraction: f64,
    /// Regular days preceding the first held-out event join the training set
    /// with a zero-attendance context.
    pub include_regular: bool,
    /// Extra samples with the window moved by up to this many epochs.
    pub augment_shift: usize,
    pub sae: SaeSpec,
    pub seed: u64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-4,
            batch_size: 1,
            train_fraction: 0.6,
            include_regular: true,
            augment_shift: 0,
            sae: SaeSpec::default(),
            seed: 0,
        }
    }
}

impl ArenaConfig {
    fn validate(&self) -> Result<(), ArenaError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ArenaError::InvalidSpec(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(ArenaError::InvalidSpec("batch_size and learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Epoch layout of one prediction: inputs end at `input_end`, outputs cover
/// `first .. first + horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindow {
    pub day: u32,
    pub first: u32,
    pub input_end: u32,
    pub horizon: usize,
}

impl EventWindow {
    pub fn for_event(spec: &ArenaSpec, ctx: &EventContext, shift: i64) -> Result<Self, ArenaError> {
        let first = i64::from(ctx.start_epoch) - spec.lead_epochs as i64 + shift;
        let last = first + spec.horizon as i64;
        if first < spec.input_epochs as i64 || last > EPOCHS_PER_DAY as i64 {
            return Err(ArenaError::Window(format!(
                "output epochs {first}..{last} with {} input epochs on day {}",
                spec.input_epochs, ctx.day
            )));
        }
        Ok(Self { day: ctx.day, first: first as u32, input_end: first as u32 - 1, horizon: spec.horizon })
    }

    pub fn epochs(&self) -> std::ops::Range<usize> {
        self.first as usize..self.first as usize + self.horizon
    }
}

/// Context standing in for a day without an event.
pub fn regular_context(template: &EventContext, day: u32) -> EventContext {
    EventContext { day, attendees: 0, event_type: "regular".into(), ..template.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub day: u32,
    pub first_epoch: u32,
    pub output: ArenaOutput,
    pub actual_prb: Vec<f64>,
    pub actual_users: Vec<f64>,
    /// Users head and truth on the training min-max scale.
    pub users_scaled: Vec<f64>,
    pub actual_users_scaled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaReport {
    pub sector: SectorId,
    pub prb: ErrorReport,
    pub users: ErrorReport,
    pub predictions: Vec<WindowPrediction>,
    pub saturation: SaturationEstimate,
}

#[derive(Debug, Clone)]
pub struct TrainedArena {
    pub sector: SectorId,
    pub spec: ArenaSpec,
    pub model: ModelGraph,
    pub sae: Sae,
    pub stats: FeatureStats,
    pub saturation: SaturationEstimate,
    /// Mean QoS per epoch of day over the training regular days.
    pub regular_qos: Vec<f64>,
    pub loss_history: Vec<f64>,
}

struct Sample {
    input: Tensor,
    code: f64,
    target: Vec<f64>,
}

fn user_stats_feature(features: &[Feature]) -> Vec<Feature> {
    let mut f = features.to_vec();
    if !f.contains(&Feature::AvgUsers) {
        f.push(Feature::AvgUsers);
    }
    f
}

impl TrainedArena {
    fn snapshot(&self, day: &SectorTrace, w: &EventWindow, regular_qos: bool) -> Result<Tensor, ArenaError> {
        let end = Epoch::new(w.day, w.input_end);
        let raw = slice_snapshot(day, end, &self.spec.features, self.spec.input_epochs)?;
        let mut snap = raw.clone();
        if regular_qos {
            if let Some(row) = self.spec.features.iter().position(|&f| f == Feature::Qos) {
                let start = w.input_end as usize + 1 - self.spec.input_epochs;
                snap.row_mut(row).copy_from_slice(&self.regular_qos[start..=w.input_end as usize]);
            }
        }
        let n = normalize(&snap, &self.stats).snapshot;
        Ok(Tensor::new(self.spec.input_shape(), n.data)?)
    }

    fn raw_output(&self, day: &SectorTrace, ctx: &EventContext, regular_qos: bool) -> Result<Vec<f64>, ArenaError> {
        let w = EventWindow::for_event(&self.spec, ctx, 0)?;
        let x = self.snapshot(day, &w, regular_qos)?;
        let code = self.sae.code(ctx);
        Ok(self.model.predict(&x, Some(&[code]))?.into_data())
    }

    /// Both heads for the window of `ctx`; reads `day` only up to the
    /// window's input end.
    pub fn predict(&self, day: &SectorTrace, ctx: &EventContext) -> Result<ArenaOutput, ArenaError> {
        let raw = self.raw_output(day, ctx, false)?;
        Ok(ArenaOutput::from_raw(&raw, |x| self.stats.unscale(Feature::AvgUsers, x)))
    }

    /// Plan for the event window, optionally with the input QoS replaced by
    /// its regular-day profile.
    pub fn recommend(&self, day: &SectorTrace, ctx: &EventContext, regular_qos: bool) -> Result<CapacityPlan, ArenaError> {
        let raw = self.raw_output(day, ctx, regular_qos)?;
        let out = ArenaOutput::from_raw(&raw, |x| self.stats.unscale(Feature::AvgUsers, x));
        let w = EventWindow::for_event(&self.spec, ctx, 0)?;
        recommend_capacity(&out, self.saturation.users, self.sector, w.first)
    }
}

fn sample(
    trace: &SectorTrace,
    ctx: &EventContext,
    spec: &ArenaSpec,
    stats: &FeatureStats,
    code: f64,
    shift: i64,
) -> Result<Sample, ArenaError> {
    let w = EventWindow::for_event(spec, ctx, shift)?;
    let raw = slice_snapshot(trace, Epoch::new(w.day, w.input_end), &spec.features, spec.input_epochs)?;
    let input = Tensor::new(spec.input_shape(), normalize(&raw, stats).snapshot.data)?;
    let window = &trace.epochs[w.epochs()];
    let mut target: Vec<f64> = window.iter().map(|(_, r)| r.dl_prb_util).collect();
    target.extend(window.iter().map(|(_, r)| scaled_users(stats, r.avg_active_users)));
    Ok(Sample { input, code, target })
}

fn scaled_users(stats: &FeatureStats, u: f64) -> f64 {
    let i = stats.features.iter().position(|&f| f == Feature::AvgUsers).expect("users always in stats");
    let range = stats.max[i] - stats.min[i];
    if range > 0.0 {
        (u - stats.min[i]) / range
    } else {
        0.0
    }
}

fn full_day(trace: &SectorTrace) -> bool {
    trace.len() == EPOCHS_PER_DAY
}

/// Train/held-out event split of `dataset`, chronological.
pub fn split_events(events: &[EventContext], train_fraction: f64) -> Result<(Vec<EventContext>, Vec<EventContext>), ArenaError> {
    if events.len() < MIN_EVENTS {
        return Err(ArenaError::InsufficientEvents { needed: MIN_EVENTS, got: events.len() });
    }
    let mut ev = events.to_vec();
    ev.sort_by_key(|e| e.day);
    let n_train = ((ev.len() as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, ev.len() - 1);
    let held = ev.split_off(n_train);
    Ok((ev, held))
}

/// Trains the sector model against a shared context encoder.
pub fn arena_train_sector(
    dataset: &Dataset,
    sector: SectorId,
    sae: &Sae,
    spec: &ArenaSpec,
    cfg: &ArenaConfig,
) -> Result<(TrainedArena, ArenaReport), ArenaError> {
    spec.validate()?;
    cfg.validate()?;
    let days = dataset.traces.get(&sector).ok_or(ArenaError::UnknownSector(sector))?;
    let (train_ev, held_ev) = split_events(&dataset.events, cfg.train_fraction)?;
    let cutoff = held_ev[0].day;
    let template = &train_ev[0];

    let train_days: Vec<&SectorTrace> =
        days.iter().filter(|t| t.day().is_some_and(|d| d < cutoff) && full_day(t)).collect();
    let regular: Vec<&SectorTrace> =
        train_days.iter().copied().filter(|t| t.day_label == DayLabel::Regular).collect();
    let stats = FeatureStats::fit(&user_stats_feature(&spec.features), train_days.iter().copied())?;
    let saturation = estimate_saturation_users(&regular, UTIL_THRESHOLD)?;
    let regular_qos = (0..EPOCHS_PER_DAY)
        .map(|e| {
            let q: Vec<f64> = regular.iter().filter_map(|t| t.epochs[e].1.qos().ok()).collect();
            q.iter().sum::<f64>() / q.len().max(1) as f64
        })
        .collect();

    let mut contexts: Vec<(&SectorTrace, EventContext)> = Vec::new();
    for t in &train_days {
        let day = t.day().expect("filtered on day");
        match train_ev.iter().find(|e| e.day == day) {
            Some(e) => contexts.push((t, e.clone())),
            None if cfg.include_regular && t.day_label == DayLabel::Regular => {
                contexts.push((t, regular_context(template, day)))
            }
            None => {}
        }
    }
    let shift = cfg.augment_shift as i64;
    let mut samples = Vec::new();
    for (t, ctx) in &contexts {
        let code = sae.code(ctx);
        for s in -shift..=shift {
            match sample(t, ctx, spec, &stats, code, s) {
                Ok(x) => samples.push(x),
                Err(ArenaError::Window(_)) if s != 0 => {}
                Err(e) => return Err(e),
            }
        }
    }

    let model_seed = derive_seed(cfg.seed, &[u64::from(sector.enb_id), u64::from(sector.sector_index), u64::from(sector.band_mhz)]);
    let mut model = arena_build(spec, model_seed)?;
    let mut adam = AdamState::new(model.n_params(), cfg.learning_rate);
    let mut rng = child_rng(model_seed, &[0x5A]);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            for &i in batch {
                let s = &samples[i];
                let pred = model.forward(&s.input, Some(&[s.code]), true)?;
                total += mse(pred.data(), &s.target)?;
                let mut g = mse_grad(pred.data(), &s.target)?;
                g.iter_mut().for_each(|v| *v /= batch.len() as f64);
                model.backward(&g)?;
            }
            model.adam_step(&mut adam)?;
        }
        loss_history.push(total / samples.len().max(1) as f64);
    }

    let trained = TrainedArena {
        sector,
        spec: spec.clone(),
        model,
        sae: sae.clone(),
        stats,
        saturation,
        regular_qos,
        loss_history,
    };
    let report = evaluate(&trained, dataset, &held_ev)?;
    Ok((trained, report))
}

/// Held-out errors per head; users on the training min-max scale.
pub fn evaluate(model: &TrainedArena, dataset: &Dataset, events: &[EventContext]) -> Result<ArenaReport, ArenaError> {
    let mut predictions = Vec::with_capacity(events.len());
    for ev in events {
        let day = dataset.trace(model.sector, ev.day).ok_or(ArenaError::UnknownSector(model.sector))?;
        let w = EventWindow::for_event(&model.spec, ev, 0)?;
        let output = model.predict(day, ev)?;
        let window = &day.epochs[w.epochs()];
        let actual_users: Vec<f64> = window.iter().map(|(_, r)| r.avg_active_users).collect();
        predictions.push(WindowPrediction {
            day: ev.day,
            first_epoch: w.first,
            users_scaled: output.users_forecast.iter().map(|&u| scaled_users(&model.stats, u)).collect(),
            actual_users_scaled: actual_users.iter().map(|&u| scaled_users(&model.stats, u)).collect(),
            actual_prb: window.iter().map(|(_, r)| r.dl_prb_util).collect(),
            actual_users,
            output,
        });
    }
    let pick = |f: &dyn Fn(&WindowPrediction) -> Vec<f64>| predictions.iter().map(f).collect::<Vec<_>>();
    let prb = ErrorReport::from_windows(&pick(&|p| p.output.prb_forecast.clone()), &pick(&|p| p.actual_prb.clone()));
    let users = ErrorReport::from_windows(&pick(&|p| p.users_scaled.clone()), &pick(&|p| p.actual_users_scaled.clone()));
    Ok(ArenaReport { sector: model.sector, prb, users, predictions, saturation: model.saturation })
}

/// Shared context encoder plus one model per sector, trained in parallel.
pub fn arena_train(
    dataset: &Dataset,
    sectors: &[SectorId],
    spec: &ArenaSpec,
    cfg: &ArenaConfig,
    exec: Execution,
) -> Result<Vec<(TrainedArena, ArenaReport)>, ArenaError> {
    let (train_ev, _) = split_events(&dataset.events, cfg.train_fraction)?;
    let mut sae_ctx = train_ev.clone();
    if cfg.include_regular {
        sae_ctx.push(regular_context(&train_ev[0], u32::MAX));
    }
    let sae = sae_train(&sae_ctx, &cfg.sae, derive_seed(cfg.seed, &[0x5AE]))?;
    par::try_map(exec, sectors, |&s| arena_train_sector(dataset, s, &sae, spec, cfg))
}
