use serde::{Deserialize, Serialize};

use super::env::{observe, ScalarEnv};
use super::{dual_update, unit_sphere, BcoError, FeasibleSet};
use crate::par::{self, Execution};
use crate::rng::{child_rng, derive_seed};

/// How the constraint gradient is estimated from bandit feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Reuse the observation at the played point.
    #[default]
    Shared,
    /// Probe a second, independently perturbed point.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcoParams {
    /// Primal step; `sigma_c0 / sqrt(E)` when unset.
    pub sigma: Option<f64>,
    /// Dual step; `mu_c0 / sqrt(E)` when unset.
    pub mu: Option<f64>,
    /// Exploration radius; `E^(-1/4)` when unset.
    pub eps: Option<f64>,
    pub sigma_c0: f64,
    pub mu_c0: f64,
    /// Starting capacity; the lower edge of the shrunk box when unset.
    pub init: Option<f64>,
    pub lambda0: f64,
    /// Use the environment's exact constraint gradient and play `ĉ` itself.
    pub exact_gradients: bool,
    pub perturbation: Perturbation,
    pub seed: u64,
}

impl Default for BcoParams {
    fn default() -> Self {
        Self {
            sigma: None,
            mu: None,
            eps: None,
            sigma_c0: 0.5,
            mu_c0: 2.0,
            init: None,
            lambda0: 0.0,
            exact_gradients: false,
            perturbation: Perturbation::Shared,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcoState {
    pub c_hat: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub mu: f64,
    pub eps: f64,
    pub epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub c_hat: f64,
    pub c_played: f64,
    pub lambda: f64,
    pub cost: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sigma: f64,
    pub mu: f64,
    pub eps: f64,
    pub records: Vec<EpochRecord>,
}

impl Trajectory {
    pub fn mean_cost(&self) -> f64 {
        self.records.iter().map(|r| r.cost).sum::<f64>() / self.records.len() as f64
    }

    pub fn mean_constraint(&self) -> f64 {
        self.records.iter().map(|r| r.g).sum::<f64>() / self.records.len() as f64
    }

    /// `max(0, mean g)`.
    pub fn violation(&self) -> f64 {
        self.mean_constraint().max(0.0)
    }

    pub fn csv_header() -> &'static str {
        "epoch,sector,c_hat,c_played,lambda,cost,g"
    }

    pub fn write_csv_rows(&self, sector: &str, out: &mut String) {
        for r in &self.records {
            out.push_str(&format!("{},{sector},{},{},{},{},{}\n", r.epoch, r.c_hat, r.c_played, r.lambda, r.cost, r.g));
        }
    }
}

fn resolve(params: &BcoParams, horizon: usize) -> Result<(f64, f64, f64), BcoError> {
    if horizon == 0 {
        return Err(BcoError::InvalidParams("horizon must be >= 1".into()));
    }
    let e = horizon as f64;
    let sigma = params.sigma.unwrap_or(params.sigma_c0 / e.sqrt());
    let mu = params.mu.unwrap_or(params.mu_c0 / e.sqrt());
    let eps = if params.exact_gradients { 0.0 } else { params.eps.unwrap_or(e.powf(-0.25)) };
    if !(sigma >= 0.0 && mu > 0.0 && eps >= 0.0) || (!params.exact_gradients && eps == 0.0) {
        return Err(BcoError::InvalidParams(format!("sigma {sigma}, mu {mu}, eps {eps}")));
    }
    Ok((sigma, mu, eps))
}

/// Runs the online primal-dual scheme for `horizon` epochs.
///
/// Each epoch plays `x = ĉ + εu`, observes `g(x)`, forms the one-point
/// estimate `∇̂g = g(x) u / ε`, steps the primal on the Lagrangian gradient
/// `δ'(ĉ) + λ ∇̂g` with projection onto the shrunk box, then takes the
/// linearized dual ascent step.
pub fn run_bco<E: ScalarEnv + ?Sized>(env: &mut E, horizon: usize, params: &BcoParams) -> Result<Trajectory, BcoError> {
    let (sigma, mu, eps) = resolve(params, horizon)?;
    let (lo, hi) = env.bounds();
    let set = FeasibleSet { lo: vec![lo], hi: vec![hi] }.shrunk(eps)?;
    let cost = env.cost_model();
    let mut rng = child_rng(params.seed, &[0xB0C0]);
    let mut state = BcoState {
        c_hat: set.project(&[params.init.unwrap_or(set.lo[0])])[0],
        lambda: params.lambda0.max(0.0),
        sigma,
        mu,
        eps,
        epoch: 0,
    };
    let mut records = Vec::with_capacity(horizon);
    for e in 0..horizon {
        let (played, g_obs, g_grad) = if params.exact_gradients {
            let g = observe(env, e, state.c_hat)?;
            let grad = env
                .constraint_grad(e, state.c_hat)
                .ok_or_else(|| BcoError::Env("environment has no exact constraint gradient".into()))?;
            (state.c_hat, g, grad)
        } else {
            let u = unit_sphere(&mut rng, 1)[0];
            let x = state.c_hat + eps * u;
            let g = observe(env, e, x)?;
            let grad = match params.perturbation {
                Perturbation::Shared => g * u / eps,
                Perturbation::Independent => {
                    let u2 = unit_sphere(&mut rng, 1)[0];
                    observe(env, e, state.c_hat + eps * u2)? * u2 / eps
                }
            };
            (x, g, grad)
        };
        records.push(EpochRecord {
            epoch: e,
            c_hat: state.c_hat,
            c_played: played,
            lambda: state.lambda,
            cost: cost.value(played)?,
            g: g_obs,
        });
        let grad_l = cost.derivative(state.c_hat) + state.lambda * g_grad;
        let next = set.project(&[state.c_hat - sigma * grad_l])[0];
        state.lambda = dual_update(state.lambda, mu, g_obs, g_grad, next - state.c_hat);
        state.c_hat = next;
        state.epoch = e + 1;
    }
    Ok(Trajectory { sigma, mu, eps, records })
}

/// Independent per-sector solvers; sector `b` is seeded from `(seed, b)`.
pub fn run_sectors<E>(envs: Vec<E>, horizon: usize, params: &BcoParams, exec: Execution) -> Result<Vec<Trajectory>, BcoError>
where
    E: ScalarEnv + Send + Sync + Clone,
{
    let jobs: Vec<(usize, E)> = envs.into_iter().enumerate().collect();
    par::try_map(exec, &jobs, |(b, env)| {
        let mut env = env.clone();
        let p = BcoParams { seed: derive_seed(params.seed, &[*b as u64]), ..params.clone() };
        run_bco(&mut env, horizon, &p)
    })
}
