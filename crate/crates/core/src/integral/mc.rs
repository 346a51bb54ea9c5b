use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::IntegralError;
use crate::filter::FilterModel;
use crate::pde::Boundary;
use crate::sim::{mix_seed, path_rng, Estimate};

/// Monte Carlo engine for the integral equation under general priors.
///
/// Paths of `Y` follow the Euler scheme for `dY = (f(t, Y) + σ²) dt + σ dZ`
/// under `Q`, and `X̂ = f(t, Y)` is read off exactly, which is the law of
/// the conditional-mean diffusion without ever evaluating `ψ`. Paths come in
/// antithetic pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    /// Number of antithetic pairs is half of this, rounded up.
    pub n_paths: usize,
    /// Steps over the full horizon `[0, T]`; shorter intervals use the
    /// same step length.
    pub n_steps: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n_paths: 200_000, n_steps: 2000, seed: 0 }
    }
}

/// One path: `(e^{I_s}, ∫_t^s e^{I_u} X̂_u 1{X̂_u ≤ h(u)} du, X̂_s)`, the
/// integrals by the trapezoid rule on the Euler grid.
fn path(
    model: &FilterModel,
    boundary: &Boundary,
    t: f64,
    y0: f64,
    s: f64,
    normals: &[f64],
    sign: f64,
) -> Result<(f64, f64, f64), IntegralError> {
    let sigma = model.sigma();
    let steps = normals.len();
    let dt = (s - t) / steps as f64;
    let sq = dt.sqrt();
    let mut y = y0;
    let mut x = model.posterior_mean(t, y)?;
    let mut integral = 0.0;
    // The start sits on the boundary up to the round-off of the inverse.
    let mut g = if x <= boundary.at(t) + 1e-12 { x } else { 0.0 };
    let mut acc = 0.0;
    for (k, z) in normals.iter().enumerate() {
        y += (x + sigma * sigma) * dt + sigma * sq * sign * z;
        let u = if k + 1 == steps { s } else { t + (k + 1) as f64 * dt };
        let x_next = model.posterior_mean(u, y)?;
        integral += 0.5 * (x + x_next) * dt;
        let g_next = if x_next <= boundary.at(u) { integral.exp() * x_next } else { 0.0 };
        acc += 0.5 * (g + g_next) * dt;
        x = x_next;
        g = g_next;
    }
    Ok((integral.exp(), acc, x))
}

/// Antithetic estimate of `E^Q[payoff(path)]` from `(t, x0)` up to `s`.
/// `key` separates the random streams of different calls.
#[allow(clippy::too_many_arguments)]
fn simulate<F>(
    model: &FilterModel,
    boundary: &Boundary,
    t: f64,
    x0: f64,
    s: f64,
    key: u64,
    cfg: &McConfig,
    payoff: F,
) -> Result<(f64, f64), IntegralError>
where
    F: Fn((f64, f64, f64)) -> f64 + Sync,
{
    assert!(cfg.n_paths >= 2 && cfg.n_steps >= 1, "Monte Carlo needs at least one pair and one step");
    let y0 = model.invert_mean(t, x0)?;
    let step = boundary.horizon() / cfg.n_steps as f64;
    let steps = (((s - t) / step) - 1e-9).ceil().max(1.0) as usize;
    let seed = mix_seed(cfg.seed, key);
    let pairs = cfg.n_paths.div_ceil(2);
    let values = (0..pairs as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let normals: Vec<f64> = (0..steps).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a = path(model, boundary, t, y0, s, &normals, 1.0)?;
            let b = path(model, boundary, t, y0, s, &normals, -1.0)?;
            Ok(0.5 * (payoff(a) + payoff(b)))
        })
        .collect::<Result<Vec<f64>, IntegralError>>()?;
    let est = Estimate::from_samples(&values);
    Ok((est.mean, est.stderr))
}

/// `E^Q[e^{I_s} X̂_s 1{X̂_s ≤ h(s)}]` with its standard error.
pub(super) fn rhs_term(
    model: &FilterModel,
    t: f64,
    x0: f64,
    boundary: &Boundary,
    s: f64,
    cfg: &McConfig,
) -> Result<(f64, f64), IntegralError> {
    let h = boundary.at(s);
    if s <= t {
        return Ok((if x0 <= h { x0 } else { 0.0 }, 0.0));
    }
    simulate(model, boundary, t, x0, s, s.to_bits() ^ t.to_bits().rotate_left(17), cfg, |(e, _, x)| {
        if x <= h {
            e * x
        } else {
            0.0
        }
    })
}

/// `LHS - RHS` at node `i`, estimated path by path.
pub(super) fn node_residual(model: &FilterModel, boundary: &Boundary, i: usize, cfg: &McConfig) -> Result<(f64, f64), IntegralError> {
    let n = boundary.len() - 1;
    if i == n {
        return Ok((0.0, 0.0));
    }
    let t = boundary.t_nodes[i];
    simulate(model, boundary, t, boundary.h[i], boundary.horizon(), i as u64, cfg, |(lhs, rhs, _)| lhs - 1.0 - rhs)
}
