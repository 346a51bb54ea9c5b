//! The integral equation characterizing the stopping boundary:
//!
//! `E^Q[e^{∫_t^T X̂_u du}] = 1 + ∫_t^T E^Q[e^{∫_t^s X̂_u du} X̂_s 1{X̂_s ≤ h(s)}] ds`
//!
//! with `X̂` started at `(t, h(t))`. The boundary is its unique non-positive
//! continuous solution, so the residual `LHS - RHS` certifies a boundary
//! produced by other means, and for normal priors the equation can be
//! marched backwards to produce one.

mod law;
mod mc;

pub use law::{gaussian_law, GaussianLawQ};
pub use mc::McConfig;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::filter::{FilterError, FilterModel};
use crate::pde::{default_domain, Boundary};
use crate::prior::Prior;
use crate::quadrature::{simpson, GaussHermite, GaussLegendre};

/// Default Gauss–Hermite order for the bivariate expectations.
pub const DEFAULT_NODES: usize = 64;

/// Gauss–Legendre order for the first time step, where the integrand
/// behaves like `√(s - t)`.
const FIRST_STEP_NODES: usize = 24;

/// The whitened kinked dimension is integrated over this many standard
/// deviations either side of the tilted mean.
const TRUNCATION: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegralError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("closed-form engine needs a normal prior, got {0}")]
    WrongPriorKind(&'static str),
    #[error("no expectation engine for a {0} prior; supply a Monte Carlo configuration")]
    EngineUnavailable(&'static str),
    #[error("no sign change of the residual on [{lo}, {hi}] at t = {t}; lower x_lo")]
    NoRootInBracket { t: f64, lo: f64, hi: f64 },
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
}

/// How the expectations under `Q` are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    /// Closed-form joint Gaussian plus Gauss–Hermite quadrature with the
    /// given number of nodes. Normal priors only.
    Gauss { nodes: usize },
    MonteCarlo(McConfig),
}

impl Default for Engine {
    fn default() -> Self {
        Engine::Gauss { nodes: DEFAULT_NODES }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualOptions {
    pub engine: Engine,
    /// Evaluate every `stride`-th node only (the last two nodes are always
    /// included).
    pub stride: usize,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions { engine: Engine::default(), stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub t_nodes: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Monte Carlo standard errors, when that engine was used.
    pub stderr: Option<Vec<f64>>,
    /// Largest `|residual|` over all reported nodes but the final two,
    /// where the integrand degenerates.
    pub max_abs: f64,
}

/// Bivariate expectation `E[e^I X 1{X ≤ h}]` for `(X, I)` with the given
/// joint Gaussian law, by quadrature after whitening.
#[derive(Debug, Clone)]
pub struct GaussEngine {
    hermite: GaussHermite,
    legendre: GaussLegendre,
}

impl GaussEngine {
    pub fn new(nodes: usize) -> Self {
        GaussEngine { hermite: GaussHermite::new(nodes), legendre: GaussLegendre::new(nodes) }
    }

    /// `X = m_x + √v_x z1`, `I = m_I + k z1 + r z2` with `k = cov/√v_x`.
    /// The `z2` factor is smooth and goes to Gauss–Hermite; the `z1`
    /// factor carries the indicator, so after completing the square it is
    /// integrated up to the whitened boundary only.
    pub fn tilted_expectation(&self, law: &GaussianLawQ, h: f64) -> f64 {
        let sx = law.var_x.sqrt();
        if sx < 1e-150 {
            return if law.mean_x <= h { law.exp_mean_i() * law.mean_x } else { 0.0 };
        }
        let k = law.cov_xi / sx;
        let r = (law.var_i - k * k).max(0.0).sqrt();
        let smooth = self.hermite.expect(|z| (r * z).exp());
        // φ(z) e^{kz} = e^{k²/2} φ(z - k)
        let b = (h - law.mean_x) / sx;
        let (lo, hi) = (k - TRUNCATION, b.min(k + TRUNCATION));
        if hi <= lo {
            return 0.0;
        }
        let inv_sqrt_2pi = 0.5 * std::f64::consts::FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2;
        let kinked = self
            .legendre
            .integrate(lo, hi, |z| inv_sqrt_2pi * (-0.5 * (z - k) * (z - k)).exp() * (law.mean_x + sx * z));
        (law.mean_i + 0.5 * k * k).exp() * smooth * kinked
    }
}

/// One integrand value `E^Q[e^{∫_t^s X̂} X̂_s 1{X̂_s ≤ h(s)}]` with `X̂`
/// started at `(t, h(t))`.
pub fn ie_rhs_term(model: &FilterModel, t: f64, boundary: &Boundary, s: f64, engine: &Engine) -> Result<f64, IntegralError> {
    assert!(s >= t && s <= boundary.horizon() + 1e-12, "s must lie in [t, T]");
    let x0 = boundary.at(t);
    match engine {
        Engine::Gauss { nodes } => {
            let law = gaussian_law(model, t, x0, s)?;
            Ok(GaussEngine::new(*nodes).tilted_expectation(&law, boundary.at(s)))
        }
        Engine::MonteCarlo(cfg) => Ok(mc::rhs_term(model, t, x0, boundary, s, cfg)?.0),
    }
}

/// Residual `LHS - RHS` of the integral equation at every `stride`-th node
/// of the boundary's (uniform) time grid.
pub fn residual(model: &FilterModel, boundary: &Boundary, opts: &ResidualOptions) -> Result<ResidualReport, IntegralError> {
    check_boundary(boundary)?;
    let n = boundary.len() - 1;
    let mut idx: Vec<usize> = (0..=n).step_by(opts.stride.max(1)).collect();
    idx.extend([n - 1, n]);
    idx.sort_unstable();
    idx.dedup();

    let (residuals, stderr): (Vec<f64>, Option<Vec<f64>>) = match &opts.engine {
        Engine::Gauss { nodes } => {
            if !matches!(model.prior(), Prior::Normal { .. }) {
                return Err(IntegralError::EngineUnavailable(model.prior().kind_name()));
            }
            let engine = GaussEngine::new(*nodes);
            let first = GaussLegendre::new(FIRST_STEP_NODES);
            let r = idx
                .par_iter()
                .map(|&i| node_residual(model, &engine, &first, boundary, i, boundary.h[i]))
                .collect::<Result<Vec<_>, _>>()?;
            (r, None)
        }
        Engine::MonteCarlo(cfg) => {
            let r = idx
                .iter()
                .map(|&i| mc::node_residual(model, boundary, i, cfg))
                .collect::<Result<Vec<_>, _>>()?;
            let (m, e) = r.into_iter().unzip();
            (m, Some(e))
        }
    };

    let max_abs = residuals
        .iter()
        .zip(&idx)
        .filter(|(_, &i)| i + 2 <= n)
        .map(|(r, _)| r.abs())
        .fold(0.0, f64::max);
    Ok(ResidualReport { t_nodes: idx.iter().map(|&i| boundary.t_nodes[i]).collect(), residuals, stderr, max_abs })
}

fn check_boundary(boundary: &Boundary) -> Result<(), IntegralError> {
    let ts = &boundary.t_nodes;
    if ts.len() < 3 {
        return Err(IntegralError::InvalidBoundary("needs at least three time nodes".into()));
    }
    let dt = (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64;
    if ts.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(IntegralError::InvalidBoundary("time nodes must be equally spaced".into()));
    }
    if boundary.h.iter().any(|h| !h.is_finite()) {
        return Err(IntegralError::InvalidBoundary("non-finite boundary value".into()));
    }
    Ok(())
}

/// `LHS - RHS` at node `i` when the boundary takes the trial value `c`
/// there (and its stored values at later nodes).
///
/// The time integral substitutes `s = t_i + Δt w²` on the first step, which
/// removes the square-root behaviour of the integrand near `s = t_i`, and
/// uses composite Simpson on the remaining nodes.
fn node_residual(
    model: &FilterModel,
    engine: &GaussEngine,
    first: &GaussLegendre,
    boundary: &Boundary,
    i: usize,
    c: f64,
) -> Result<f64, IntegralError> {
    let ts = &boundary.t_nodes;
    let n = ts.len() - 1;
    if i == n {
        return Ok(0.0);
    }
    let t = ts[i];
    let horizon = ts[n];
    let lhs = gaussian_law(model, t, c, horizon)?.exp_mean_i();

    let dt = ts[i + 1] - t;
    let h_next = boundary.h[i + 1];
    let mut err = None;
    let head = first.integrate(0.0, 1.0, |w| {
        let s = t + dt * w * w;
        let h_s = c + (h_next - c) * w * w;
        match gaussian_law(model, t, c, s) {
            Ok(law) => 2.0 * dt * w * engine.tilted_expectation(&law, h_s),
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }

    let mut tail_vals = Vec::with_capacity(n - i);
    for (s, h) in ts[i + 1..=n].iter().zip(&boundary.h[i + 1..=n]) {
        let law = gaussian_law(model, t, c, *s)?;
        tail_vals.push(engine.tilted_expectation(&law, *h));
    }
    let tail = simpson(&tail_vals, dt);
    Ok(lhs - 1.0 - head - tail)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOptions {
    pub nodes: usize,
    /// Lower end of the bisection bracket; defaults to the PDE domain edge.
    pub x_lo: Option<f64>,
    /// Bisection stops once the bracket is narrower than this.
    pub tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { nodes: DEFAULT_NODES, x_lo: None, tol: 1e-10 }
    }
}

pub fn solve_fixed_point(model: &FilterModel, horizon: f64, n_t: usize) -> Result<Boundary, IntegralError> {
    solve_fixed_point_with(model, horizon, n_t, &FixedPointOptions::default())
}

/// Backward march on a uniform grid: `h(T) = 0`, then at each earlier node
/// bisection on `[x_lo, 0]` for the trial value that zeroes the residual,
/// given the values already found at later nodes.
pub fn solve_fixed_point_with(
    model: &FilterModel,
    horizon: f64,
    n_t: usize,
    opts: &FixedPointOptions,
) -> Result<Boundary, IntegralError> {
    if !matches!(model.prior(), Prior::Normal { .. }) {
        return Err(IntegralError::WrongPriorKind(model.prior().kind_name()));
    }
    assert!(n_t >= 2 && horizon > 0.0, "need a positive horizon and at least two steps");
    let x_lo = opts.x_lo.unwrap_or_else(|| default_domain(model.prior()).0);
    let engine = GaussEngine::new(opts.nodes);
    let first = GaussLegendre::new(FIRST_STEP_NODES);
    let ts: Vec<f64> = (0..=n_t).map(|i| if i == n_t { horizon } else { horizon * i as f64 / n_t as f64 }).collect();
    let mut boundary = Boundary::new(ts, vec![0.0; n_t + 1]);

    for i in (0..n_t).rev() {
        let f = |c: f64| node_residual(model, &engine, &first, &boundary, i, c);
        let (mut lo, mut hi) = bracket(&f, boundary.h[i + 1], x_lo)
            .transpose()
            .ok_or(IntegralError::NoRootInBracket { t: boundary.t_nodes[i], lo: x_lo, hi: 0.0 })??;
        while hi - lo > opts.tol {
            let mid = 0.5 * (lo + hi);
            if f(mid)? > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // Monotone by construction in the continuous problem; enforce it
        // against bisection round-off.
        boundary.h[i] = (0.5 * (lo + hi)).min(boundary.h[i + 1]);
    }
    Ok(boundary)
}

/// Sign-change bracket `[lo, hi] ⊂ [x_lo, 0]` with `f(lo) ≤ 0 < f(hi)`.
///
/// The residual is positive at 0 and its root sits just below the boundary
/// value at the next node, so the search steps down from there with
/// doubling widths. Far below the boundary the residual is exponentially
/// small and its sign is not reliable, so the bracket is kept as close to
/// the root as possible.
fn bracket<F>(f: &F, h_next: f64, x_lo: f64) -> Result<Option<(f64, f64)>, IntegralError>
where
    F: Fn(f64) -> Result<f64, IntegralError>,
{
    if f(0.0)? <= 0.0 {
        return Ok(None);
    }
    let mut hi = 0.0;
    let mut c = h_next.min(0.0);
    let mut width = 1e-3;
    loop {
        if f(c)? <= 0.0 {
            return Ok(Some((c, hi)));
        }
        if c <= x_lo {
            return Ok(None);
        }
        hi = c;
        c = (c - width).max(x_lo);
        width *= 2.0;
    }
}
