//! Online primal-dual capacity allocation with bandit (one-point) feedback.
//!
//! Each sector is an independent scalar problem: minimize a known spectrum
//! cost `δ(c)` subject to a long-term constraint `g(c) <= 0` whose value is
//! only observed at the played point.

mod env;
mod solver;

use serde::{Deserialize, Serialize};

pub use env::{offline_oracle, OracleResult, QuadraticTestbed, ScalarEnv, SimEnv};
pub use solver::{run_bco, run_sectors, BcoParams, BcoState, EpochRecord, Perturbation, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum BcoError {
    #[error("capacity must be non-negative, got {0}")]
    NegativeCapacity(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("exploration radius {eps} leaves an empty feasible set [{lo}, {hi}]")]
    EmptyShrunkSet { eps: f64, lo: f64, hi: f64 },
    #[error("non-finite function value {0}")]
    NonFinite(f64),
    #[error("constraint infeasible everywhere on [{lo}, {hi}]")]
    Infeasible { lo: f64, hi: f64 },
    #[error("environment: {0}")]
    Env(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub alpha: f64,
    pub beta: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<(), BcoError> {
        if !(self.alpha > 0.0) || !(self.beta >= 1.0) {
            return Err(BcoError::InvalidParams(format!("need alpha > 0 and beta >= 1, got {self:?}")));
        }
        Ok(())
    }
}

/// Spectrum price: free inside the owned bandwidth (`c <= 1`), `α c^β` beyond.
pub fn cost(c: f64, params: CostParams) -> Result<f64, BcoError> {
    if c < 0.0 || c.is_nan() {
        return Err(BcoError::NegativeCapacity(c));
    }
    Ok(if c <= 1.0 { 0.0 } else { params.alpha * c.powf(params.beta) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostModel {
    /// Free up to the owned bandwidth, priced above it.
    Piecewise(CostParams),
    /// `α c^β` everywhere.
    Power(CostParams),
}

impl CostModel {
    pub fn params(&self) -> CostParams {
        match *self {
            CostModel::Piecewise(p) | CostModel::Power(p) => p,
        }
    }

    pub fn value(&self, c: f64) -> Result<f64, BcoError> {
        match *self {
            CostModel::Piecewise(p) => cost(c, p),
            CostModel::Power(p) => {
                if c < 0.0 || c.is_nan() {
                    return Err(BcoError::NegativeCapacity(c));
                }
                Ok(p.alpha * c.powf(p.beta))
            }
        }
    }

    /// Derivative (right derivative at the kink).
    pub fn derivative(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        match *self {
            CostModel::Piecewise(p) if c <= 1.0 => {
                let _ = p;
                0.0
            }
            CostModel::Piecewise(p) | CostModel::Power(p) => p.alpha * p.beta * c.powf(p.beta - 1.0),
        }
    }
}

/// Per-sector box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FeasibleSet {
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; n], hi: vec![hi; n] }
    }

    pub fn validate(&self) -> Result<(), BcoError> {
        if self.lo.len() != self.hi.len() {
            return Err(BcoError::InvalidParams("bound vectors differ in length".into()));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(*l >= 0.0 && l <= h) {
                return Err(BcoError::InvalidParams(format!("box [{l}, {h}] needs 0 <= lo <= hi")));
            }
        }
        Ok(())
    }

    /// Box pulled in by `eps` on both sides so that every exploration point
    /// `c ± eps` stays feasible.
    pub fn shrunk(&self, eps: f64) -> Result<FeasibleSet, BcoError> {
        self.validate()?;
        let lo: Vec<f64> = self.lo.iter().map(|l| l + eps).collect();
        let hi: Vec<f64> = self.hi.iter().map(|h| h - eps).collect();
        for (l, h) in lo.iter().zip(&hi) {
            if l > h {
                return Err(BcoError::EmptyShrunkSet { eps, lo: l - eps, hi: h + eps });
            }
        }
        Ok(FeasibleSet { lo, hi })
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lo.iter().zip(&self.hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
    }
}

/// Observations at one epoch for one sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochFeedback {
    pub qos: f64,
    pub throughput: f64,
    pub arrivals: f64,
    pub gamma: f64,
}

/// `(Γ - q) + (r̄ - ζ̄)`; non-positive when both constraints hold.
pub fn constraint_value(fb: &EpochFeedback) -> f64 {
    (fb.gamma - fb.qos) + (fb.arrivals - fb.throughput)
}

/// `(d / ε) f(x + ε u) u`.
pub fn one_point_gradient<F>(f: F, x: &[f64], eps: f64, u: &[f64]) -> Result<Vec<f64>, BcoError>
where
    F: FnOnce(&[f64]) -> f64,
{
    if !(eps > 0.0) || x.len() != u.len() {
        return Err(BcoError::InvalidParams(format!("eps {eps}, dims {} and {}", x.len(), u.len())));
    }
    let probe: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + eps * b).collect();
    let v = f(&probe);
    if !v.is_finite() {
        return Err(BcoError::NonFinite(v));
    }
    let k = x.len() as f64 / eps * v;
    Ok(u.iter().map(|ui| k * ui).collect())
}

/// Uniform direction on the unit sphere; `±1` in one dimension.
pub fn unit_sphere<R: rand::Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    if d == 1 {
        return vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `P(ĉ - σ ∇)` onto `set`.
pub fn primal_update(c_hat: &[f64], grad: &[f64], sigma: f64, set: &FeasibleSet) -> Vec<f64> {
    let step: Vec<f64> = c_hat.iter().zip(grad).map(|(c, g)| c - sigma * g).collect();
    set.project(&step)
}

/// `[λ + μ (g + ∇g · Δc)]^+`.
pub fn dual_update(lambda: f64, mu: f64, g: f64, g_grad: f64, primal_diff: f64) -> f64 {
    (lambda + mu * (g + g_grad * primal_diff)).max(0.0)
}
