//! Canonical data model for per-sector KPI traces.
//!
//! A [`Dataset`] maps every [`SectorId`] to one [`SectorTrace`] per day. Each
//! trace is an ordered list of `(Epoch, EpochRecord)` pairs holding the
//! aggregated measurements of one monitoring interval.

mod io;
mod snapshot;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_dataset, save_dataset, sidecar_path, write_atomic, TRACE_HEADER};
pub use snapshot::{normalize, slice_snapshot, FeatureStats, Normalized, Snapshot};

/// Monitoring interval length used throughout.
pub const EPOCH_MINUTES: u32 = 15;
/// Number of 15-minute epochs in a day.
pub const EPOCHS_PER_DAY: usize = 96;
/// Bands a sector may operate in unless configured otherwise.
pub const DEFAULT_BANDS: [u32; 3] = [800, 1800, 2600];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("inconsistent record: {volume} bits served with zero effective time")]
    InconsistentQos { volume: f64 },
    #[error("invalid record value: {0}")]
    InvalidRecord(String),
    #[error("insufficient history: need {needed} epochs ending at {end}, have {available}")]
    InsufficientHistory { needed: usize, available: usize, end: Epoch },
    #[error("epoch {0} not found in trace")]
    EpochNotFound(Epoch),
    #[error("trace epochs out of order at position {0}")]
    Unordered(usize),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("invalid event context: {0}")]
    InvalidEvent(String),
    #[error("event day {day} of sector {sector} has no matching event context")]
    MissingEvent { sector: SectorId, day: u32 },
    #[error("duplicate sector/day: {sector} day {day}")]
    Duplicate { sector: SectorId, day: u32 },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A monitoring interval: `index` within `day`, lasting `duration_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Epoch {
    pub day: u32,
    pub index: u32,
    pub duration_min: u32,
}

impl Epoch {
    pub fn new(day: u32, index: u32) -> Self {
        Self { day, index, duration_min: EPOCH_MINUTES }
    }

    /// Minutes since midnight at which the epoch starts.
    pub fn start_minute(&self) -> u32 {
        self.index * self.duration_min
    }

    /// Position on a continuous epoch axis across days.
    pub fn absolute(&self) -> u64 {
        let per_day = u64::from(24 * 60 / self.duration_min);
        u64::from(self.day) * per_day + u64::from(self.index)
    }

    pub fn epochs_per_day(&self) -> u32 {
        24 * 60 / self.duration_min
    }
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}e{}", self.day, self.index)
    }
}

/// One directional antenna cell of an eNB on a given band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectorId {
    pub enb_id: u32,
    pub sector_index: u32,
    pub band_mhz: u32,
}

impl fmt::Display for SectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.enb_id, self.sector_index, self.band_mhz)
    }
}

impl std::str::FromStr for SectorId {
    type Err = TraceError;

    /// Parses the `enb-sector-band` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('-').collect();
        let bad = || TraceError::InvalidRecord(format!("bad sector id `{s}` (want enb-sector-band)"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |p: &str| p.parse::<u32>().map_err(|_| bad());
        Ok(Self { enb_id: num(parts[0])?, sector_index: num(parts[1])?, band_mhz: num(parts[2])? })
    }
}

/// Aggregated KPIs of one sector over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub avg_active_users: f64,
    pub peak_active_users: f64,
    pub dl_volume_bits: f64,
    pub ul_volume_bits: f64,
    pub dl_prb_util: f64,
    pub dl_effective_time_s: f64,
}

impl EpochRecord {
    pub fn validate(&self) -> Result<(), TraceError> {
        let fields = [
            ("avg_users", self.avg_active_users),
            ("peak_users", self.peak_active_users),
            ("dl_bits", self.dl_volume_bits),
            ("ul_bits", self.ul_volume_bits),
            ("dl_prb_util", self.dl_prb_util),
            ("dl_eff_time_s", self.dl_effective_time_s),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(TraceError::InvalidRecord(format!("{name} = {v}")));
            }
        }
        if self.peak_active_users < self.avg_active_users {
            return Err(TraceError::InvalidRecord(format!(
                "peak_users {} < avg_users {}",
                self.peak_active_users, self.avg_active_users
            )));
        }
        if self.dl_prb_util > 1.0 {
            return Err(TraceError::InvalidRecord(format!("dl_prb_util {} > 1", self.dl_prb_util)));
        }
        if (self.dl_effective_time_s == 0.0) != (self.dl_volume_bits == 0.0) {
            return Err(TraceError::InvalidRecord(
                "dl_eff_time_s is zero iff dl_bits is zero".to_string(),
            ));
        }
        Ok(())
    }

    /// Served downlink bits per second of effective transmission time.
    pub fn qos(&self) -> Result<f64, TraceError> {
        qos_metric(self.dl_volume_bits, self.dl_effective_time_s)
    }

    pub fn feature(&self, feature: Feature) -> Result<f64, TraceError> {
        Ok(match feature {
            Feature::AvgUsers => self.avg_active_users,
            Feature::PeakUsers => self.peak_active_users,
            Feature::DlVolume => self.dl_volume_bits,
            Feature::UlVolume => self.ul_volume_bits,
            Feature::DlPrbUtil => self.dl_prb_util,
            Feature::DlEffTime => self.dl_effective_time_s,
            Feature::Qos => self.qos()?,
        })
    }
}

/// QoS of an epoch: served volume over effective downlink time (bit/s).
///
/// An idle epoch (no volume, no active time) has QoS 0.
pub fn qos_metric(dl_volume_bits: f64, dl_effective_time_s: f64) -> Result<f64, TraceError> {
    if !dl_volume_bits.is_finite() || !dl_effective_time_s.is_finite() {
        return Err(TraceError::InvalidRecord("non-finite qos input".into()));
    }
    if dl_volume_bits < 0.0 || dl_effective_time_s < 0.0 {
        return Err(TraceError::InvalidRecord("negative qos input".into()));
    }
    if dl_effective_time_s == 0.0 {
        if dl_volume_bits == 0.0 {
            return Ok(0.0);
        }
        return Err(TraceError::InconsistentQos { volume: dl_volume_bits });
    }
    Ok(dl_volume_bits / dl_effective_time_s)
}

/// Per-epoch attribute usable as a model feature or analysis column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    AvgUsers,
    PeakUsers,
    DlVolume,
    UlVolume,
    DlPrbUtil,
    DlEffTime,
    Qos,
}

impl Feature {
    /// Model input features in their fixed row order.
    pub const DEFAULT: [Feature; 3] = [Feature::AvgUsers, Feature::DlVolume, Feature::Qos];
    pub const ALL: [Feature; 7] = [
        Feature::AvgUsers,
        Feature::PeakUsers,
        Feature::DlVolume,
        Feature::UlVolume,
        Feature::DlPrbUtil,
        Feature::DlEffTime,
        Feature::Qos,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Feature::AvgUsers => "users",
            Feature::PeakUsers => "peak_users",
            Feature::DlVolume => "dl_volume",
            Feature::UlVolume => "ul_volume",
            Feature::DlPrbUtil => "dl_prb",
            Feature::DlEffTime => "dl_eff_time",
            Feature::Qos => "qos",
        }
    }

    pub fn parse(name: &str) -> Result<Feature, TraceError> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| TraceError::UnknownFeature(name.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DayLabel {
    Regular,
    EventDay,
}

impl DayLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            DayLabel::Regular => "regular",
            DayLabel::EventDay => "event",
        }
    }

    pub fn parse(s: &str) -> Option<DayLabel> {
        match s {
            "regular" => Some(DayLabel::Regular),
            "event" => Some(DayLabel::EventDay),
            _ => None,
        }
    }
}

/// Time series of one sector, usually covering a single day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorTrace {
    pub sector: SectorId,
    pub day_label: DayLabel,
    pub epochs: Vec<(Epoch, EpochRecord)>,
}

impl SectorTrace {
    /// Builds a trace, checking order and record invariants.
    pub fn new(
        sector: SectorId,
        day_label: DayLabel,
        epochs: Vec<(Epoch, EpochRecord)>,
    ) -> Result<Self, TraceError> {
        for (i, w) in epochs.windows(2).enumerate() {
            if (w[0].0.day, w[0].0.index) >= (w[1].0.day, w[1].0.index) {
                return Err(TraceError::Unordered(i + 1));
            }
        }
        for (_, r) in &epochs {
            r.validate()?;
        }
        Ok(Self { sector, day_label, epochs })
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Day of the first epoch.
    pub fn day(&self) -> Option<u32> {
        self.epochs.first().map(|(e, _)| e.day)
    }

    pub fn position(&self, epoch: Epoch) -> Option<usize> {
        self.epochs
            .binary_search_by(|(e, _)| (e.day, e.index).cmp(&(epoch.day, epoch.index)))
            .ok()
    }

    /// Column of a single feature over all epochs.
    pub fn series(&self, feature: Feature) -> Result<Vec<f64>, TraceError> {
        self.epochs.iter().map(|(_, r)| r.feature(feature)).collect()
    }

    /// Concatenates consecutive traces of one sector into one timeline.
    ///
    /// The result is labeled `EventDay` when any part is.
    pub fn join(parts: &[SectorTrace]) -> Result<SectorTrace, TraceError> {
        let first = parts
            .first()
            .ok_or_else(|| TraceError::InvalidRecord("joining zero traces".into()))?;
        let label = if parts.iter().any(|p| p.day_label == DayLabel::EventDay) {
            DayLabel::EventDay
        } else {
            DayLabel::Regular
        };
        let epochs = parts.iter().flat_map(|p| p.epochs.iter().copied()).collect();
        SectorTrace::new(first.sector, label, epochs)
    }
}

/// Context of a mass event, all epochs on the same `day`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventContext {
    pub day: u32,
    pub attendees: u32,
    pub start_epoch: u32,
    pub halftime_epoch: u32,
    pub end_epoch: u32,
    pub event_type: String,
}

impl EventContext {
    pub fn new(
        day: u32,
        attendees: u32,
        start_epoch: u32,
        halftime_epoch: u32,
        end_epoch: u32,
        event_type: impl Into<String>,
    ) -> Result<Self, TraceError> {
        let ctx = Self {
            day,
            attendees,
            start_epoch,
            halftime_epoch,
            end_epoch,
            event_type: event_type.into(),
        };
        ctx.validate()?;
        Ok(ctx)
    }

    /// A football match starting 19:30, break at 20:15, final whistle 21:15.
    pub fn football(day: u32, attendees: u32) -> Self {
        Self {
            day,
            attendees,
            start_epoch: 78,
            halftime_epoch: 81,
            end_epoch: 85,
            event_type: "football".to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.attendees == 0 {
            return Err(TraceError::InvalidEvent("attendees must be positive".into()));
        }
        if !(self.start_epoch < self.halftime_epoch && self.halftime_epoch < self.end_epoch) {
            return Err(TraceError::InvalidEvent(format!(
                "need start < halftime < end, got {} / {} / {}",
                self.start_epoch, self.halftime_epoch, self.end_epoch
            )));
        }
        if self.end_epoch as usize >= EPOCHS_PER_DAY {
            return Err(TraceError::InvalidEvent(format!("end epoch {} beyond day", self.end_epoch)));
        }
        Ok(())
    }

    pub fn start(&self) -> Epoch {
        Epoch::new(self.day, self.start_epoch)
    }

    pub fn halftime(&self) -> Epoch {
        Epoch::new(self.day, self.halftime_epoch)
    }

    pub fn end(&self) -> Epoch {
        Epoch::new(self.day, self.end_epoch)
    }
}

/// All traces of a measurement campaign plus its events.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub traces: BTreeMap<SectorId, Vec<SectorTrace>>,
    pub events: Vec<EventContext>,
}

impl Dataset {
    pub fn sectors(&self) -> Vec<SectorId> {
        self.traces.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty() && self.events.is_empty()
    }

    pub fn event_on(&self, day: u32) -> Option<&EventContext> {
        self.events.iter().find(|e| e.day == day)
    }

    /// Number of distinct days covered by any sector.
    pub fn n_days(&self) -> usize {
        let mut days: Vec<u32> = self
            .traces
            .values()
            .flat_map(|ts| ts.iter().filter_map(|t| t.day()))
            .collect();
        days.sort_unstable();
        days.dedup();
        days.len()
    }

    /// The trace of `sector` on `day`, if present.
    pub fn trace(&self, sector: SectorId, day: u32) -> Option<&SectorTrace> {
        self.traces.get(&sector)?.iter().find(|t| t.day() == Some(day))
    }

    /// All days of `sector` joined into a single timeline.
    pub fn timeline(&self, sector: SectorId) -> Result<SectorTrace, TraceError> {
        let parts = self
            .traces
            .get(&sector)
            .ok_or_else(|| TraceError::InvalidRecord(format!("unknown sector {sector}")))?;
        SectorTrace::join(parts)
    }

    /// Checks the cross-object invariants.
    pub fn validate(&self) -> Result<(), TraceError> {
        for ev in &self.events {
            ev.validate()?;
        }
        for (sector, traces) in &self.traces {
            let mut seen = Vec::new();
            for t in traces {
                let Some(day) = t.day() else { continue };
                if seen.contains(&day) {
                    return Err(TraceError::Duplicate { sector: *sector, day });
                }
                seen.push(day);
                if t.day_label == DayLabel::EventDay && self.event_on(day).is_none() {
                    return Err(TraceError::MissingEvent { sector: *sector, day });
                }
            }
        }
        Ok(())
    }
}
