//! Monte Carlo evaluation of selling strategies.
//!
//! Under the physical measure `P` the drift is drawn from the prior and the
//! price path is simulated exactly; the seller sees only the price and acts
//! on the posterior mean. Under `Q` the posterior mean is simulated
//! directly and the payoff is `exp(∫_0^τ X̂ ds)`. Both give `E[S_τ]`.
//!
//! Every path owns a counter-based random stream keyed by `(seed, path)`,
//! and per-path payoffs are reduced in path order, so estimates do not
//! depend on the number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{FilterError, FilterModel};
use crate::pde::{Boundary, SolverError, ValueSurface};
use crate::prior::Prior;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("config asks for measure {got:?}, this estimator runs under {expected:?}")]
    WrongMeasure { expected: Measure, got: Measure },
    #[error("invalid stopping boundary: {0}")]
    InvalidBoundary(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    P,
    Q,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule {
    /// Sell the first grid time the posterior mean is at or below `h`.
    BoundaryRule { boundary: Boundary },
    Immediate,
    Terminal,
    /// Sell now if `E[e^{XT}] ≤ 1`, otherwise hold to `T`.
    ZeroOrT,
}

impl StoppingRule {
    pub fn name(&self) -> &'static str {
        match self {
            StoppingRule::BoundaryRule { .. } => "boundary",
            StoppingRule::Immediate => "immediate",
            StoppingRule::Terminal => "terminal",
            StoppingRule::ZeroOrT => "zero_or_t",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub measure: Measure,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { n_paths: 400_000, n_steps: 2000, seed: 0, measure: Measure::P }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_paths < 1 {
            return Err(SimError::InvalidConfig("n_paths must be at least 1".into()));
        }
        if self.n_steps < 1 {
            return Err(SimError::InvalidConfig("n_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_measure(self, measure: Measure) -> Self {
        SimConfig { measure, ..self }
    }
}

/// Sample mean with `stderr = sample sd / √n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    /// Compensated two-pass mean and variance, reduced in slice order.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n > 0, "estimate of an empty sample");
        let mean = neumaier(xs.iter().copied()) / n as f64;
        let stderr = if n > 1 {
            let ss = neumaier(xs.iter().map(|x| (x - mean) * (x - mean)));
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, n }
    }
}

fn neumaier(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// SplitMix64 finalizer of `seed` combined with `key`.
pub(crate) fn mix_seed(seed: u64, key: u64) -> u64 {
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream number `stream` of the generator keyed by `seed`.
pub(crate) fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Resolved form of a rule for one simulation.
enum Plan<'a> {
    Now,
    AtHorizon,
    Boundary(&'a Boundary),
}

fn plan<'a>(model: &FilterModel, horizon: f64, rule: &'a StoppingRule) -> Result<Plan<'a>, SimError> {
    Ok(match rule {
        StoppingRule::Immediate => Plan::Now,
        StoppingRule::Terminal => Plan::AtHorizon,
        StoppingRule::ZeroOrT => {
            if model.prior().exp_moment(horizon) <= 1.0 {
                Plan::Now
            } else {
                Plan::AtHorizon
            }
        }
        StoppingRule::BoundaryRule { boundary } => {
            if !boundary.satisfies_invariants(1e-9) {
                return Err(SimError::InvalidBoundary("must be non-decreasing, non-positive and zero at T".into()));
            }
            if (boundary.horizon() - horizon).abs() > 1e-9 * horizon.max(1.0) {
                return Err(SimError::InvalidBoundary(format!(
                    "boundary ends at {} but the horizon is {horizon}",
                    boundary.horizon()
                )));
            }
            Plan::Boundary(boundary)
        }
    })
}

fn check(horizon: f64, cfg: &SimConfig, expected: Measure) -> Result<(), SimError> {
    cfg.validate()?;
    if cfg.measure != expected {
        return Err(SimError::WrongMeasure { expected, got: cfg.measure });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::InvalidConfig(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// Draws the drift from the prior. Quadrature priors are sampled as their
/// discrete approximation.
struct DriftSampler {
    normal: Option<(f64, f64)>,
    points: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DriftSampler {
    fn new(prior: &Prior) -> Self {
        if let Prior::Normal { m, gamma } = prior {
            return DriftSampler { normal: Some((*m, *gamma)), points: vec![], cumulative: vec![] };
        }
        let (points, weights) = prior.atoms().expect("finite priors carry atoms");
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        DriftSampler { normal: None, points, cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if let Some((m, gamma)) = self.normal {
            let z: f64 = rng.sample(StandardNormal);
            return m + gamma * z;
        }
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let k = self.cumulative.partition_point(|c| *c <= u).min(self.points.len() - 1);
        self.points[k]
    }
}

fn run_paths<F>(cfg: &SimConfig, key: u64, path: F) -> Result<Estimate, SimError>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64, SimError> + Sync,
{
    let seed = mix_seed(cfg.seed, key);
    let payoffs = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| path(&mut path_rng(seed, p)))
        .collect::<Result<Vec<f64>, SimError>>()?;
    Ok(Estimate::from_samples(&payoffs))
}

/// `E[S_τ]` with the drift drawn from the prior and the price simulated
/// exactly on the grid `t_k = kT/n`; `S_0 = 1`.
pub fn simulate_value_p(model: &FilterModel, horizon: f64, rule: &StoppingRule, cfg: &SimConfig) -> Result<Estimate, SimError> {
    check(horizon, cfg, Measure::P)?;
    let plan = plan(model, horizon, rule)?;
    if let Plan::Now = plan {
        return Ok(Estimate { mean: 1.0, stderr: 0.0, n: cfg.n_paths });
    }
    let sigma = model.sigma();
    let sampler = DriftSampler::new(model.prior());
    let n = cfg.n_steps;
    let dt = horizon / n as f64;
    let sq = dt.sqrt();
    run_paths(cfg, 0x50, |rng| {
        let x = sampler.sample(rng);
        match plan {
            Plan::Now => unreachable!(),
            Plan::AtHorizon => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(((x - 0.5 * sigma * sigma) * horizon + sigma * horizon.sqrt() * z).exp())
            }
            Plan::Boundary(b) => {
                // Y_t = ln S_t + σ²t/2 = X t + σ W_t
                let mut y = 0.0;
                for k in 0..n {
                    let t = k as f64 * dt;
                    if model.posterior_mean(t, y)? <= b.h_at_step(k, n, t) {
                        return Ok((y - 0.5 * sigma * sigma * t).exp());
                    }
                    let z: f64 = rng.sample(StandardNormal);
                    y += x * dt + sigma * sq * z;
                }
                Ok((y - 0.5 * sigma * sigma * horizon).exp())
            }
        }
    })
}

/// `E^Q[exp(∫_0^τ X̂ ds)]` with `X̂ = f(t, Y)` and `Y` following the Euler
/// scheme for `dY = (f(t, Y) + σ²) dt + σ dZ`; the time integral uses the
/// trapezoid rule.
pub fn simulate_value_q(model: &FilterModel, horizon: f64, rule: &StoppingRule, cfg: &SimConfig) -> Result<Estimate, SimError> {
    check(horizon, cfg, Measure::Q)?;
    let plan = plan(model, horizon, rule)?;
    if let Plan::Now = plan {
        return Ok(Estimate { mean: 1.0, stderr: 0.0, n: cfg.n_paths });
    }
    let sigma = model.sigma();
    let n = cfg.n_steps;
    let dt = horizon / n as f64;
    let sq = dt.sqrt();
    let x_start = model.posterior_mean(0.0, 0.0)?;
    run_paths(cfg, 0x51, |rng| {
        let (mut y, mut x, mut integral) = (0.0, x_start, 0.0f64);
        for k in 0..n {
            let t = k as f64 * dt;
            if let Plan::Boundary(b) = plan {
                if x <= b.h_at_step(k, n, t) {
                    return Ok(integral.exp());
                }
            }
            let z: f64 = rng.sample(StandardNormal);
            y += (x + sigma * sigma) * dt + sigma * sq * z;
            let x_next = model.posterior_mean(if k + 1 == n { horizon } else { t + dt }, y)?;
            integral += 0.5 * (x + x_next) * dt;
            x = x_next;
        }
        Ok(integral.exp())
    })
}

/// Dispatches on `cfg.measure`.
pub fn simulate_value(model: &FilterModel, horizon: f64, rule: &StoppingRule, cfg: &SimConfig) -> Result<Estimate, SimError> {
    match cfg.measure {
        Measure::P => simulate_value_p(model, horizon, rule, cfg),
        Measure::Q => simulate_value_q(model, horizon, rule, cfg),
    }
}

/// Best of selling now and selling at `T` without learning:
/// `max(1, E[e^{XT}])`.
pub fn naive_value(model: &FilterModel, horizon: f64) -> f64 {
    model.prior().exp_moment(horizon).max(1.0)
}

/// Where the boundary-rule value comes from.
#[derive(Debug, Clone, Copy)]
pub enum ValueSource<'a> {
    Simulated(&'a SimConfig),
    /// `v(0, x̂₀)` read off a solved surface, with zero standard error.
    Surface(&'a ValueSurface),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Improvement {
    pub value: f64,
    pub stderr: f64,
    pub naive: f64,
    /// `(V - V_naive) / V_naive`.
    pub relative: f64,
}

/// Relative gain of the boundary strategy over the naive one.
pub fn improvement(model: &FilterModel, horizon: f64, boundary: &Boundary, source: ValueSource<'_>) -> Result<Improvement, SimError> {
    let (value, stderr) = match source {
        ValueSource::Simulated(cfg) => {
            let est = simulate_value(model, horizon, &StoppingRule::BoundaryRule { boundary: boundary.clone() }, cfg)?;
            (est.mean, est.stderr)
        }
        ValueSource::Surface(s) => (s.value_at(0.0, model.prior().mean())?, 0.0),
    };
    let naive = naive_value(model, horizon);
    Ok(Improvement { value, stderr, naive, relative: (value - naive) / naive })
}

impl Boundary {
    /// Boundary value at simulation step `k` of `n` (time `t`), exact when
    /// the boundary grid matches the simulation grid.
    fn h_at_step(&self, k: usize, n: usize, t: f64) -> f64 {
        if self.len() == n + 1 {
            self.h[k]
        } else {
            self.at(t)
        }
    }
}
