//! Statistical signatures of a dataset: feature correlation, control-plane
//! volatility and the user count at which a sector saturates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{DayLabel, Feature, SectorTrace, TraceError};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Sample Pearson correlation. Zero when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewSamples { needed: 2, got: n });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Symmetric matrix of pairwise Pearson coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub feature_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.feature_names.iter().position(|n| n == a)?;
        let j = self.feature_names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }

    /// Rows of `name,v1,v2,...` with a header, for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature");
        for n in &self.feature_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (n, row) in self.feature_names.iter().zip(&self.values) {
            out.push_str(n);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Correlation of `features` over the epochs of `traces` whose day label is
/// `day_filter` (all epochs when `None`).
pub fn correlation_matrix(
    traces: &[&SectorTrace],
    features: &[&str],
    day_filter: Option<DayLabel>,
) -> Result<CorrelationMatrix, AnalyticsError> {
    let feats: Vec<Feature> = features.iter().map(|n| Feature::parse(n)).collect::<Result<_, _>>()?;
    let selected: Vec<&SectorTrace> =
        traces.iter().copied().filter(|t| day_filter.map_or(true, |l| t.day_label == l)).collect();
    let columns: Vec<Vec<f64>> = feats
        .iter()
        .map(|&f| -> Result<Vec<f64>, TraceError> {
            let mut col = Vec::new();
            for t in &selected {
                col.extend(t.series(f)?);
            }
            Ok(col)
        })
        .collect::<Result<_, _>>()?;
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(AnalyticsError::TooFewSamples { needed: 2, got: n });
    }
    let k = feats.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        values[i][i] = 1.0;
        for j in i + 1..k {
            let r = pearson(&columns[i], &columns[j])?;
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { feature_names: feats.iter().map(|f| f.name().to_string()).collect(), values })
}

/// Per-epoch `peak / avg` active users; 1 where the average is zero.
pub fn peak_to_average(trace: &SectorTrace) -> Vec<f64> {
    trace
        .epochs
        .iter()
        .map(|(_, r)| if r.avg_active_users > 0.0 { r.peak_active_users / r.avg_active_users } else { 1.0 })
        .collect()
}

/// Coarse time-of-day buckets: morning 6-12h, afternoon 12-18h, evening
/// 18-24h, night 0-6h.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DayPeriod {
    Morning,
    Afternoon,
    Evening,
    Night,
}

impl DayPeriod {
    pub const ALL: [DayPeriod; 4] = [DayPeriod::Morning, DayPeriod::Afternoon, DayPeriod::Evening, DayPeriod::Night];

    pub fn of_minute(minute: u32) -> DayPeriod {
        match minute / 60 {
            6..=11 => DayPeriod::Morning,
            12..=17 => DayPeriod::Afternoon,
            18..=23 => DayPeriod::Evening,
            _ => DayPeriod::Night,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DayPeriod::Morning => "morning",
            DayPeriod::Afternoon => "afternoon",
            DayPeriod::Evening => "evening",
            DayPeriod::Night => "night",
        }
    }
}

/// Mean of `feature` per time-of-day period (NaN for empty buckets).
pub fn period_means(trace: &SectorTrace, feature: Feature) -> Result<[(DayPeriod, f64); 4], AnalyticsError> {
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for (e, r) in &trace.epochs {
        let p = DayPeriod::of_minute(e.start_minute()) as usize;
        sums[p] += r.feature(feature)?;
        counts[p] += 1;
    }
    Ok(DayPeriod::ALL.map(|p| {
        let i = p as usize;
        (p, if counts[i] > 0 { sums[i] / counts[i] as f64 } else { f64::NAN })
    }))
}

/// Result of extrapolating a sector's utilization line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationEstimate {
    /// Users at which utilization reaches the threshold; `+inf` when the
    /// fitted slope is not positive.
    pub users: f64,
    pub slope: f64,
    pub intercept: f64,
    pub samples: usize,
}

impl SaturationEstimate {
    pub fn is_sentinel(&self) -> bool {
        self.users.is_infinite()
    }
}

/// Least-squares fit of `dl_prb_util = a * users + c` over regular epochs
/// with utilization below `util_threshold`, inverted at the threshold.
pub fn estimate_saturation_users(
    regular_traces: &[&SectorTrace],
    util_threshold: f64,
) -> Result<SaturationEstimate, AnalyticsError> {
    let points: Vec<(f64, f64)> = regular_traces
        .iter()
        .filter(|t| t.day_label == DayLabel::Regular)
        .flat_map(|t| t.epochs.iter())
        .filter(|(_, r)| r.dl_prb_util < util_threshold)
        .map(|(_, r)| (r.avg_active_users, r.dl_prb_util))
        .collect();
    if points.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let users = if slope > 0.0 {
        (util_threshold - intercept) / slope
    } else {
        log::warn!("saturation estimate: non-positive slope {slope}, returning +inf");
        f64::INFINITY
    };
    Ok(SaturationEstimate { users, slope, intercept, samples: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Epoch, EpochRecord, SectorId};
    use proptest::prelude::*;

    fn trace_from(users: &[f64], util: impl Fn(f64) -> f64, label: DayLabel) -> SectorTrace {
        let epochs = users
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                (
                    Epoch::new(0, i as u32),
                    EpochRecord {
                        avg_active_users: u,
                        peak_active_users: 2.0 * u,
                        dl_volume_bits: 3.0 * u + 1.0,
                        ul_volume_bits: u,
                        dl_prb_util: util(u),
                        dl_effective_time_s: 1.0,
                    },
                )
            })
            .collect();
        SectorTrace { sector: SectorId { enb_id: 0, sector_index: 0, band_mhz: 1800 }, day_label: label, epochs }
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // hand computation: cov = 4, var_x = var_y = 5 -> 0.8
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(pearson(&[1.0], &[1.0, 2.0]), Err(AnalyticsError::LengthMismatch(1, 2))));
    }

    #[test]
    fn single_feature_matrix() {
        let t = trace_from(&[1.0, 2.0, 5.0], |u| u / 300.0, DayLabel::Regular);
        let m = correlation_matrix(&[&t], &["users"], None).unwrap();
        assert_eq!(m.values, vec![vec![1.0]]);
        assert!(correlation_matrix(&[&t], &["nope"], None).is_err());
        assert!(correlation_matrix(&[&t], &["users"], Some(DayLabel::EventDay)).is_err());
    }

    #[test]
    fn peak_ratio_examples() {
        let t = trace_from(&[5.0, 0.0], |_| 0.0, DayLabel::Regular);
        assert_eq!(peak_to_average(&t), vec![2.0, 1.0]);
    }

    #[test]
    fn planted_line_is_inverted() {
        let users: Vec<f64> = (1..=96).map(|i| f64::from(i) * 2.5).collect();
        let t = trace_from(&users, |u| (u / 300.0).min(1.0), DayLabel::Regular);
        let est = estimate_saturation_users(&[&t], 0.95).unwrap();
        assert!((est.users - 285.0).abs() / 285.0 < 0.01, "{}", est.users);
    }

    #[test]
    fn flat_utilization_gives_sentinel() {
        let t = trace_from(&[1.0, 2.0, 3.0], |_| 0.3, DayLabel::Regular);
        let est = estimate_saturation_users(&[&t], 0.95).unwrap();
        assert!(est.is_sentinel());
        assert!(matches!(estimate_saturation_users(&[], 0.95), Err(AnalyticsError::Empty)));
    }

    #[test]
    fn periods_follow_clock() {
        assert_eq!(DayPeriod::of_minute(5 * 60 + 59), DayPeriod::Night);
        assert_eq!(DayPeriod::of_minute(6 * 60), DayPeriod::Morning);
        assert_eq!(DayPeriod::of_minute(12 * 60), DayPeriod::Afternoon);
        assert_eq!(DayPeriod::of_minute(23 * 60 + 45), DayPeriod::Evening);
    }

    proptest! {
        #[test]
        fn pearson_is_affine_invariant(
            xs in proptest::collection::vec(-100.0f64..100.0, 3..40),
            a in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
            b in -10.0f64..10.0,
            seed in 0u64..1000,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.3 + ((i as u64 * 31 + seed) % 17) as f64).collect();
            let r = pearson(&xs, &ys).unwrap();
            let r2 = pearson(&ys, &xs).unwrap();
            prop_assert!((r - r2).abs() < 1e-12);
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let rs = pearson(&scaled, &ys).unwrap();
            prop_assert!((rs - a.signum() * r).abs() < 1e-9);
        }

        #[test]
        fn correlation_matrix_invariants(cols in proptest::collection::vec(0.0f64..500.0, 4..30)) {
            let t = trace_from(&cols, |u| (u / 600.0).min(1.0), DayLabel::Regular);
            let m = correlation_matrix(&[&t], &["users", "dl_volume", "dl_prb", "ul_volume"], None).unwrap();
            for i in 0..4 {
                prop_assert_eq!(m.values[i][i], 1.0);
                for j in 0..4 {
                    prop_assert_eq!(m.values[i][j], m.values[j][i]);
                    prop_assert!(m.values[i][j].abs() <= 1.0);
                }
            }
        }

        #[test]
        fn saturation_estimate_ignores_order(rot in 0usize..50) {
            let users: Vec<f64> = (0..50).map(|i| 10.0 + (i * 37 % 50) as f64 * 3.0).collect();
            let util = |u: f64| (u / 280.0 + 0.01 * ((u * 7.0).sin())).clamp(0.0, 1.0);
            let a = trace_from(&users, util, DayLabel::Regular);
            let mut rotated = users.clone();
            rotated.rotate_left(rot);
            let b = trace_from(&rotated, util, DayLabel::Regular);
            let ea = estimate_saturation_users(&[&a], 0.95).unwrap();
            let eb = estimate_saturation_users(&[&b], 0.95).unwrap();
            prop_assert!((ea.users - eb.users).abs() <= 1e-9 * ea.users.abs());
        }
    }
}
