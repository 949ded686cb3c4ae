use serde::{Deserialize, Serialize};

use super::{Epoch, Feature, SectorTrace, TraceError};

/// An `F x T` window of features, row-major (one row per feature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub features: Vec<Feature>,
    pub end: Epoch,
    pub horizon: usize,
    pub data: Vec<f64>,
}

impl Snapshot {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn get(&self, feature: usize, t: usize) -> f64 {
        self.data[feature * self.horizon + t]
    }
}

/// Window of `horizon` epochs ending at `end` (inclusive).
///
/// Rows follow `features`; columns run oldest to newest. Never pads: a trace
/// that holds fewer than `horizon` epochs up to `end` is an error.
pub fn slice_snapshot(
    trace: &SectorTrace,
    end: Epoch,
    features: &[Feature],
    horizon: usize,
) -> Result<Snapshot, TraceError> {
    let last = trace.position(end).ok_or(TraceError::EpochNotFound(end))?;
    let available = last + 1;
    if horizon == 0 || horizon > available {
        return Err(TraceError::InsufficientHistory { needed: horizon, available, end });
    }
    let window = &trace.epochs[available - horizon..available];
    let mut data = Vec::with_capacity(features.len() * horizon);
    for &f in features {
        for (_, rec) in window {
            data.push(rec.feature(f)?);
        }
    }
    Ok(Snapshot { features: features.to_vec(), end, horizon, data })
}

/// Per-feature min/max fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub features: Vec<Feature>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Normalized values plus the number of entries clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub snapshot: Snapshot,
    pub clamped: usize,
}

impl FeatureStats {
    /// Fits min/max of `features` over every epoch of `traces`.
    pub fn fit<'a, I>(features: &[Feature], traces: I) -> Result<Self, TraceError>
    where
        I: IntoIterator<Item = &'a SectorTrace>,
    {
        let mut min = vec![f64::INFINITY; features.len()];
        let mut max = vec![f64::NEG_INFINITY; features.len()];
        let mut any = false;
        for t in traces {
            for (_, rec) in &t.epochs {
                any = true;
                for (i, &f) in features.iter().enumerate() {
                    let v = rec.feature(f)?;
                    min[i] = min[i].min(v);
                    max[i] = max[i].max(v);
                }
            }
        }
        if !any {
            return Err(TraceError::InvalidRecord("no epochs to fit feature stats".into()));
        }
        Ok(Self { features: features.to_vec(), min, max })
    }

    /// Direct construction from known ranges.
    pub fn from_ranges(features: &[Feature], min: Vec<f64>, max: Vec<f64>) -> Self {
        Self { features: features.to_vec(), min, max }
    }

    fn index(&self, feature: Feature) -> Option<usize> {
        self.features.iter().position(|&f| f == feature)
    }

    /// Maps one value of `feature`; returns `(value, clamped)`.
    pub fn scale(&self, feature: Feature, v: f64) -> (f64, bool) {
        let Some(i) = self.index(feature) else { return (v, false) };
        let range = self.max[i] - self.min[i];
        if range <= 0.0 {
            return (0.0, false);
        }
        let x = (v - self.min[i]) / range;
        if x < 0.0 {
            (0.0, true)
        } else if x > 1.0 {
            (1.0, true)
        } else {
            (x, false)
        }
    }

    /// Inverse of [`FeatureStats::scale`] on the training range.
    pub fn unscale(&self, feature: Feature, x: f64) -> f64 {
        match self.index(feature) {
            Some(i) => self.min[i] + x * (self.max[i] - self.min[i]),
            None => x,
        }
    }
}

/// Min-max normalizes each row of `snapshot` with `stats`.
///
/// Constant training ranges map to 0; out-of-range values are clamped and
/// counted.
pub fn normalize(snapshot: &Snapshot, stats: &FeatureStats) -> Normalized {
    let mut out = snapshot.clone();
    let mut clamped = 0;
    for (row, &f) in snapshot.features.iter().enumerate() {
        for v in out.row_mut(row) {
            let (x, c) = stats.scale(f, *v);
            clamped += usize::from(c);
            *v = x;
        }
    }
    if clamped > 0 {
        log::warn!("normalize: clamped {clamped} values outside the training range");
    }
    Normalized { snapshot: out, clamped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{DayLabel, EpochRecord, SectorId};

    fn trace(n: u32) -> SectorTrace {
        let epochs = (0..n)
            .map(|i| {
                let u = f64::from(i) + 1.0;
                let rec = EpochRecord {
                    avg_active_users: u,
                    peak_active_users: 2.0 * u,
                    dl_volume_bits: 100.0 * u,
                    ul_volume_bits: 10.0 * u,
                    dl_prb_util: 0.01 * u,
                    dl_effective_time_s: 2.0,
                };
                (Epoch::new(0, i), rec)
            })
            .collect();
        SectorTrace::new(SectorId { enb_id: 0, sector_index: 0, band_mhz: 1800 }, DayLabel::Regular, epochs)
            .unwrap()
    }

    #[test]
    fn window_ends_inclusive() {
        let t = trace(10);
        let s = slice_snapshot(&t, Epoch::new(0, 9), &Feature::DEFAULT, 4).unwrap();
        assert_eq!(s.row(0), &[7.0, 8.0, 9.0, 10.0]);
        assert_eq!(s.row(1), &[700.0, 800.0, 900.0, 1000.0]);
        assert_eq!(s.row(2), &[350.0, 400.0, 450.0, 500.0]);
    }

    #[test]
    fn too_long_horizon_is_an_error() {
        let t = trace(10);
        let err = slice_snapshot(&t, Epoch::new(0, 9), &Feature::DEFAULT, 11).unwrap_err();
        assert!(matches!(err, TraceError::InsufficientHistory { needed: 11, available: 10, .. }));
        assert!(slice_snapshot(&t, Epoch::new(0, 2), &Feature::DEFAULT, 4).is_err());
        assert!(slice_snapshot(&t, Epoch::new(1, 2), &Feature::DEFAULT, 1).is_err());
    }

    #[test]
    fn consecutive_windows_overlap() {
        let t = trace(10);
        let a = slice_snapshot(&t, Epoch::new(0, 8), &Feature::DEFAULT, 4).unwrap();
        let b = slice_snapshot(&t, Epoch::new(0, 9), &Feature::DEFAULT, 4).unwrap();
        for r in 0..3 {
            assert_eq!(&a.row(r)[1..], &b.row(r)[..3]);
        }
        assert_eq!(b, slice_snapshot(&t, Epoch::new(0, 9), &Feature::DEFAULT, 4).unwrap());
    }

    #[test]
    fn normalize_examples() {
        let f = [Feature::AvgUsers];
        let snap = Snapshot { features: f.to_vec(), end: Epoch::new(0, 2), horizon: 3, data: vec![2.0, 4.0, 6.0] };
        let stats = FeatureStats::from_ranges(&f, vec![2.0], vec![6.0]);
        assert_eq!(normalize(&snap, &stats).snapshot.data, vec![0.0, 0.5, 1.0]);

        let flat = Snapshot { data: vec![5.0; 3], ..snap.clone() };
        let flat_stats = FeatureStats::from_ranges(&f, vec![5.0], vec![5.0]);
        let n = normalize(&flat, &flat_stats);
        assert_eq!(n.snapshot.data, vec![0.0; 3]);
        assert_eq!(n.clamped, 0);

        let high = Snapshot { data: vec![8.0, 2.0, 4.0], ..snap };
        let n = normalize(&high, &stats);
        assert_eq!(n.snapshot.data, vec![1.0, 0.0, 0.5]);
        assert_eq!(n.clamped, 1);
    }

    #[test]
    fn fit_uses_all_epochs() {
        let t = trace(5);
        let stats = FeatureStats::fit(&Feature::DEFAULT, [&t]).unwrap();
        assert_eq!(stats.min[0], 1.0);
        assert_eq!(stats.max[0], 5.0);
        assert_eq!(stats.unscale(Feature::AvgUsers, 0.5), 3.0);
    }
}
