use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{constraint_value, BcoError, CostModel, CostParams, EpochFeedback};
use crate::trace::SectorTrace;

/// Feedback source for one sector.
pub trait ScalarEnv {
    fn bounds(&self) -> (f64, f64);
    fn cost_model(&self) -> CostModel;
    /// Observation after playing capacity `c` during `epoch`.
    fn feedback(&mut self, epoch: usize, c: f64) -> Result<EpochFeedback, BcoError>;
    /// Exact `dg/dc`, when the environment knows it.
    fn constraint_grad(&self, _epoch: usize, _c: f64) -> Option<f64> {
        None
    }
}

/// `q(c) = c` against `Γ = 1` with balanced queues, so `g(c) = 1 - c`,
/// priced `α c^β` on `[lo, hi]`. Optional Gaussian noise on the QoS reading.
#[derive(Debug, Clone)]
pub struct QuadraticTestbed {
    pub cost: CostModel,
    pub gamma: f64,
    pub lo: f64,
    pub hi: f64,
    pub noise_sigma: f64,
    rng: ChaCha8Rng,
}

impl QuadraticTestbed {
    pub fn new(noise_sigma: f64, seed: u64) -> Self {
        Self {
            cost: CostModel::Power(CostParams { alpha: 1.0, beta: 2.0 }),
            gamma: 1.0,
            lo: 0.0,
            hi: 3.0,
            noise_sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Best fixed capacity for this testbed.
    pub fn oracle(&self) -> Result<OracleResult, BcoError> {
        let cost = self.cost;
        let gamma = self.gamma;
        offline_oracle(|c| cost.value(c).unwrap_or(f64::INFINITY), |c| gamma - c, self.lo, self.hi, 1e-3)
    }
}

impl ScalarEnv for QuadraticTestbed {
    fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn cost_model(&self) -> CostModel {
        self.cost
    }

    fn feedback(&mut self, _epoch: usize, c: f64) -> Result<EpochFeedback, BcoError> {
        let noise = if self.noise_sigma > 0.0 {
            Normal::new(0.0, self.noise_sigma).expect("positive sigma").sample(&mut self.rng)
        } else {
            0.0
        };
        Ok(EpochFeedback { qos: c + noise, throughput: 1.0, arrivals: 1.0, gamma: self.gamma })
    }

    fn constraint_grad(&self, _epoch: usize, _c: f64) -> Option<f64> {
        Some(-1.0)
    }
}

/// Sector replay of a simulated trace. Capacity `c` scales the provisioned
/// PRBs, so the sector serves up to `c · Ũ` users at full rate; QoS and
/// served throughput are normalized to the unsaturated rate and demand.
#[derive(Debug, Clone)]
pub struct SimEnv {
    pub users: Vec<f64>,
    pub saturation_users: f64,
    pub gamma: f64,
    pub cost: CostModel,
    pub c_max: f64,
}

impl SimEnv {
    pub fn from_trace(trace: &SectorTrace, saturation_users: f64) -> Result<Self, BcoError> {
        if !(saturation_users > 0.0) {
            return Err(BcoError::InvalidParams(format!("saturation users must be positive, got {saturation_users}")));
        }
        Ok(Self {
            users: trace.epochs.iter().map(|(_, r)| r.avg_active_users).collect(),
            saturation_users,
            gamma: 0.8,
            cost: CostModel::Piecewise(CostParams { alpha: 1.0, beta: 2.0 }),
            c_max: 3.0,
        })
    }

    fn served_share(&self, epoch: usize, c: f64) -> f64 {
        let u = self.users[epoch % self.users.len()];
        if u <= 0.0 {
            1.0
        } else {
            (c * self.saturation_users / u).min(1.0)
        }
    }
}

impl ScalarEnv for SimEnv {
    fn bounds(&self) -> (f64, f64) {
        (0.0, self.c_max)
    }

    fn cost_model(&self) -> CostModel {
        self.cost
    }

    fn feedback(&mut self, epoch: usize, c: f64) -> Result<EpochFeedback, BcoError> {
        let s = self.served_share(epoch, c);
        Ok(EpochFeedback { qos: s, throughput: s, arrivals: 1.0, gamma: self.gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub c: f64,
    pub cost: f64,
    pub constraint: f64,
}

/// Best fixed decision on a `resolution` grid over `[lo, hi]`, minimizing
/// `cost(c)` subject to `constraint(c) <= 0`.
pub fn offline_oracle<C, G>(cost: C, constraint: G, lo: f64, hi: f64, resolution: f64) -> Result<OracleResult, BcoError>
where
    C: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if !(resolution > 0.0) || !(lo <= hi) {
        return Err(BcoError::InvalidParams(format!("grid [{lo}, {hi}] at {resolution}")));
    }
    let n = ((hi - lo) / resolution).round() as usize;
    let mut best: Option<OracleResult> = None;
    for i in 0..=n {
        let c = (lo + i as f64 * resolution).min(hi);
        let g = constraint(c);
        if g > 1e-12 {
            continue;
        }
        let v = cost(c);
        if best.map_or(true, |b| v < b.cost) {
            best = Some(OracleResult { c, cost: v, constraint: g });
        }
    }
    best.ok_or(BcoError::Infeasible { lo, hi })
}

/// Constraint value a testbed-like environment reports at `c`.
pub(crate) fn observe<E: ScalarEnv + ?Sized>(env: &mut E, epoch: usize, c: f64) -> Result<f64, BcoError> {
    let fb = env.feedback(epoch, c)?;
    let g = constraint_value(&fb);
    if !g.is_finite() {
        return Err(BcoError::NonFinite(g));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_examples() {
        let r = QuadraticTestbed::new(0.0, 0).oracle().unwrap();
        assert!((r.c - 1.0).abs() < 1e-9 && (r.cost - 1.0).abs() < 1e-9);
        let r = offline_oracle(|c| (c - 2.0) * (c - 2.0), |_| -1.0, 0.0, 3.0, 1e-3).unwrap();
        assert!((r.c - 2.0).abs() < 1e-9);
        assert!(matches!(offline_oracle(|c| c, |c| 5.0 - c, 0.0, 3.0, 1e-3), Err(BcoError::Infeasible { .. })));
    }

    #[test]
    fn testbed_constraint() {
        let mut tb = QuadraticTestbed::new(0.0, 0);
        assert!((observe(&mut tb, 0, 0.4).unwrap() - 0.6).abs() < 1e-15);
    }
}
