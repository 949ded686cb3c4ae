//! Synthetic stadium-area traffic.
//!
//! Regular days follow a smooth diurnal user curve per sector with
//! multiplicative lognormal noise. Event days add an attendance-driven surge
//! made of three bumps (pre-match gathering, the break, the exit) on top of a
//! low in-match plateau. Above a band's saturation point PRB utilization pins
//! at 1 and per-user QoS falls as `qos_free * saturation / users`.
//!
//! Absolute user counts are calibration choices: a regular-day peak of about
//! 60 users per sector, so that a reference match lands near 600.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::rng::child_rng;
use crate::trace::{
    DayLabel, Dataset, Epoch, EpochRecord, EventContext, SectorId, SectorTrace, DEFAULT_BANDS, EPOCHS_PER_DAY,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("overlapping events on day {0}")]
    OverlappingEvents(u32),
    #[error("event day {day} outside the season of {days} days")]
    EventOutOfRange { day: u32, days: usize },
    #[error("invalid event context: {0}")]
    InvalidEvent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSaturation {
    pub band_mhz: u32,
    pub users: f64,
}

/// Generator configuration. Every field has a default so a scenario file
/// only needs to list what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub n_sectors: usize,
    pub n_enbs: usize,
    pub bands: Vec<u32>,
    /// Average active users per epoch at unit sector load (96 points).
    pub diurnal_profile: Vec<f64>,
    /// Per-sector multiplier of the diurnal profile; empty means the built-in spread.
    pub sector_load: Vec<f64>,
    /// Event peak over regular peak at the reference attendance.
    pub event_gain: f64,
    pub reference_attendance: f64,
    pub saturation_users: Vec<BandSaturation>,
    /// Nominal per-user downlink rate without contention (bit/s).
    pub qos_free: f64,
    /// Effective downlink time of one active user per epoch (s).
    pub active_time_s: f64,
    pub ul_ratio: f64,
    /// Mean peak-to-average excess `peak/avg - 1` on a regular day.
    pub pta_regular: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n_sectors: 16,
            n_enbs: 6,
            bands: DEFAULT_BANDS.to_vec(),
            diurnal_profile: default_profile(60.0),
            sector_load: Vec::new(),
            event_gain: 10.0,
            reference_attendance: 25097.0,
            saturation_users: vec![
                BandSaturation { band_mhz: 800, users: 400.0 },
                BandSaturation { band_mhz: 1800, users: 250.0 },
                BandSaturation { band_mhz: 2600, users: 600.0 },
            ],
            qos_free: 8.0e6,
            active_time_s: 40.0,
            ul_ratio: 0.12,
            pta_regular: 0.5,
            noise_sigma: 0.05,
            rng_seed: 0,
        }
    }
}

/// Night trough around 4h, plateau from mid-morning to late evening.
pub fn default_profile(peak_users: f64) -> Vec<f64> {
    let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
    let raw: Vec<f64> = (0..EPOCHS_PER_DAY)
        .map(|e| {
            let h = (e as f64 + 0.5) / 4.0;
            let day = logistic((h - 7.5) / 1.1) * logistic((23.3 - h) / 0.9);
            0.12 + 0.88 * day
        })
        .collect();
    let max = raw.iter().cloned().fold(f64::MIN, f64::max);
    raw.into_iter().map(|v| peak_users * v / max).collect()
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidParams(m));
        if self.n_sectors == 0 || self.n_enbs == 0 || self.bands.is_empty() {
            return bad("n_sectors, n_enbs and bands must be non-empty".into());
        }
        if self.diurnal_profile.len() != EPOCHS_PER_DAY {
            return bad(format!("diurnal_profile needs {EPOCHS_PER_DAY} points, got {}", self.diurnal_profile.len()));
        }
        if self.diurnal_profile.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("diurnal_profile values must be finite and non-negative".into());
        }
        if !self.sector_load.is_empty() && self.sector_load.len() != self.n_sectors {
            return bad(format!("sector_load needs {} entries", self.n_sectors));
        }
        if self.sector_load.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("sector_load values must be finite and non-negative".into());
        }
        if !(self.event_gain >= 1.0) {
            return bad(format!("event_gain {} < 1", self.event_gain));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma {} < 0", self.noise_sigma));
        }
        if !(self.reference_attendance > 0.0 && self.qos_free > 0.0 && self.active_time_s > 0.0) {
            return bad("reference_attendance, qos_free and active_time_s must be positive".into());
        }
        if !(self.ul_ratio >= 0.0 && self.pta_regular >= 0.0) {
            return bad("ul_ratio and pta_regular must be non-negative".into());
        }
        for &b in &self.bands {
            match self.saturation_users.iter().find(|s| s.band_mhz == b) {
                Some(s) if s.users > 0.0 => {}
                Some(s) => return bad(format!("saturation_users for band {b} is {}", s.users)),
                None => return bad(format!("no saturation_users for band {b}")),
            }
        }
        Ok(())
    }

    pub fn sectors(&self) -> Vec<SectorId> {
        let per_enb = self.n_sectors.div_ceil(self.n_enbs);
        (0..self.n_sectors)
            .map(|i| SectorId {
                enb_id: (i / per_enb) as u32,
                sector_index: (i % per_enb) as u32,
                band_mhz: self.bands[i % self.bands.len()],
            })
            .collect()
    }

    pub fn load(&self, sector: usize) -> f64 {
        if self.sector_load.is_empty() {
            0.7 + 0.6 * ((sector * 7) % 16) as f64 / 15.0
        } else {
            self.sector_load[sector]
        }
    }

    pub fn saturation_for(&self, band_mhz: u32) -> f64 {
        self.saturation_users
            .iter()
            .find(|s| s.band_mhz == band_mhz)
            .map(|s| s.users)
            .unwrap_or(f64::INFINITY)
    }

    fn regular_peak(&self, sector: usize) -> f64 {
        self.load(sector) * self.diurnal_profile.iter().cloned().fold(0.0, f64::max)
    }
}

/// Per-user QoS under saturation: unchanged below the saturation point,
/// shared capacity above it.
pub fn saturated_qos(qos_free: f64, saturation_users: f64, users: f64) -> f64 {
    if users > saturation_users {
        qos_free * (saturation_users / users)
    } else {
        qos_free
    }
}

/// Multiplicative noise draws for one epoch; all 1.0 when noise is off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochNoise {
    pub users: f64,
    pub pta: f64,
    pub activity: f64,
    pub util: f64,
    pub uplink: f64,
}

impl EpochNoise {
    pub const NONE: EpochNoise = EpochNoise { users: 1.0, pta: 1.0, activity: 1.0, util: 1.0, uplink: 1.0 };

    fn draw<R: Rng>(rng: &mut R, sigma: f64) -> Self {
        let mut ln = |s: f64| {
            let z: f64 = rng.sample(StandardNormal);
            (s * z - 0.5 * s * s).exp()
        };
        Self { users: ln(sigma), pta: ln(2.0 * sigma), activity: ln(sigma), util: ln(sigma), uplink: ln(sigma) }
    }
}

/// Turns an average user count into a full KPI record for one sector.
pub fn record_for_users(
    params: &SimParams,
    band_mhz: u32,
    avg_users: f64,
    pta_mean: f64,
    noise: EpochNoise,
) -> EpochRecord {
    let sat = params.saturation_for(band_mhz);
    let pta = pta_mean * noise.pta;
    let eff_time = avg_users * params.active_time_s * noise.activity;
    let qos = saturated_qos(params.qos_free, sat, avg_users);
    let util = if avg_users > sat { 1.0 } else { (avg_users / sat * noise.util).min(1.0) };
    EpochRecord {
        avg_active_users: avg_users,
        peak_active_users: avg_users * (1.0 + pta),
        dl_volume_bits: qos * eff_time,
        ul_volume_bits: params.ul_ratio * params.qos_free * eff_time * noise.uplink,
        dl_prb_util: util,
        dl_effective_time_s: eff_time,
    }
}

/// Relative event surge at epoch `e`; peaks at 1 before kick-off and after
/// the final whistle.
pub fn surge_shape(ctx: &EventContext, e: usize) -> f64 {
    let t = e as f64 + 0.5;
    let bump = |center: f64, width: f64, amp: f64| amp * (-(t - center).powi(2) / (2.0 * width * width)).exp();
    let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
    let start = f64::from(ctx.start_epoch);
    let end = f64::from(ctx.end_epoch) + 1.0;
    let pre = bump(start - 5.5, 2.5, 1.0);
    let half = bump(f64::from(ctx.halftime_epoch) + 0.5, 1.0, 0.6);
    let post = bump(end + 0.5, 1.5, 1.0);
    let in_match = 0.25 * logistic((t - start) / 0.5) * logistic((end - t) / 0.5);
    pre + half + post + in_match
}

/// Window around the match in which control-plane volatility doubles.
fn volatility_window(ctx: &EventContext, e: usize) -> f64 {
    let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
    let t = e as f64 + 0.5;
    let lo = f64::from(ctx.start_epoch) - 12.0;
    let hi = f64::from(ctx.end_epoch) + 9.0;
    logistic((t - lo) / 0.5) * logistic((hi - t) / 0.5)
}

fn check_params(params: &SimParams) -> Result<(), SimError> {
    params.validate()
}

fn sector_day(params: &SimParams, sector: usize, day: u32, event: Option<&EventContext>) -> SectorTrace {
    let ids = params.sectors();
    let id = ids[sector];
    let load = params.load(sector);
    let mut rng = child_rng(params.rng_seed, &[u64::from(day), sector as u64]);
    let (surge_amp, share) = match event {
        Some(ctx) => {
            let share = f64::from(ctx.attendees) / params.reference_attendance;
            ((params.event_gain - 1.0) * params.regular_peak(sector) * share, share.min(1.0))
        }
        None => (0.0, 0.0),
    };
    let epochs = (0..EPOCHS_PER_DAY)
        .map(|e| {
            let noise = if params.noise_sigma > 0.0 {
                EpochNoise::draw(&mut rng, params.noise_sigma)
            } else {
                EpochNoise::NONE
            };
            let base = load * params.diurnal_profile[e];
            let (surge, vol) = match event {
                Some(ctx) if surge_amp > 0.0 => (surge_amp * surge_shape(ctx, e), share * volatility_window(ctx, e)),
                _ => (0.0, 0.0),
            };
            let users = (base + surge) * noise.users;
            let pta_mean = params.pta_regular + (1.0 + params.pta_regular) * vol;
            (Epoch::new(day, e as u32), record_for_users(params, id.band_mhz, users, pta_mean, noise))
        })
        .collect();
    let label = if event.is_some() { DayLabel::EventDay } else { DayLabel::Regular };
    SectorTrace { sector: id, day_label: label, epochs }
}

/// One regular day for every sector.
pub fn gen_regular_day(params: &SimParams, day: u32) -> Result<Vec<SectorTrace>, SimError> {
    check_params(params)?;
    Ok((0..params.n_sectors).map(|s| sector_day(params, s, day, None)).collect())
}

fn check_event(ctx: &EventContext) -> Result<(), SimError> {
    if !(ctx.start_epoch < ctx.halftime_epoch && ctx.halftime_epoch < ctx.end_epoch) {
        return Err(SimError::InvalidEvent("need start < halftime < end".into()));
    }
    if ctx.end_epoch as usize >= EPOCHS_PER_DAY {
        return Err(SimError::InvalidEvent(format!("end epoch {} beyond the day", ctx.end_epoch)));
    }
    Ok(())
}

/// The day of `context` for every sector. Zero attendance reproduces the
/// regular day draw for draw.
pub fn gen_event_day(params: &SimParams, context: &EventContext) -> Result<Vec<SectorTrace>, SimError> {
    check_params(params)?;
    check_event(context)?;
    Ok((0..params.n_sectors).map(|s| sector_day(params, s, context.day, Some(context))).collect())
}

/// `n_regular_days + events.len()` consecutive days; each event occupies its
/// own `day`, every other day is regular.
pub fn gen_season(
    params: &SimParams,
    n_regular_days: usize,
    events: &[EventContext],
    exec: Execution,
) -> Result<Dataset, SimError> {
    check_params(params)?;
    let days = n_regular_days + events.len();
    let mut seen = BTreeSet::new();
    for ev in events {
        check_event(ev)?;
        if ev.day as usize >= days {
            return Err(SimError::EventOutOfRange { day: ev.day, days });
        }
        if !seen.insert(ev.day) {
            return Err(SimError::OverlappingEvents(ev.day));
        }
    }
    let jobs: Vec<(u32, usize)> =
        (0..days as u32).flat_map(|d| (0..params.n_sectors).map(move |s| (d, s))).collect();
    let traces = par::map(exec, &jobs, |&(day, s)| {
        let ev = events.iter().find(|e| e.day == day);
        sector_day(params, s, day, ev)
    });
    let mut ds = Dataset { traces: Default::default(), events: events.to_vec() };
    ds.events.sort_by_key(|e| e.day);
    for t in traces {
        ds.traces.entry(t.sector).or_default().push(t);
    }
    Ok(ds)
}

/// Spreads `n_events` football matches evenly through a season with
/// attendance drawn from 15k to 30k.
pub fn default_event_schedule(n_regular_days: usize, n_events: usize, seed: u64) -> Vec<EventContext> {
    let days = n_regular_days + n_events;
    let mut rng = child_rng(seed, &[0xE7E7]);
    (0..n_events)
        .map(|k| {
            let day = ((k as f64 + 0.5) * days as f64 / n_events as f64).floor() as u32;
            let attendees = rng.gen_range(15_000..=30_000);
            EventContext::football(day, attendees)
        })
        .collect()
}
