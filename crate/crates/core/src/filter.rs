//! Posterior law of the drift given the observation process.
//!
//! With `Y_t = X t + σ W_t`, the conditional law of `X` given `Y_t = y`
//! reweights the prior by `exp((2uy - u²t) / (2σ²))`. Everything here is
//! expressed in terms of that reweighting: the posterior mean `f(t, y)`,
//! its inverse `y_x(t)` in `y`, and the dispersion
//! `ψ(t, x) = Var_{t, y_x(t)}(X) / σ` of the conditional-mean diffusion.

use rayon::prelude::*;
use thiserror::Error;

use crate::prior::{normal_moments, Prior, PriorError};

/// Points closer than this to an endpoint of a compact support get `ψ = 0`.
pub const ENDPOINT_CLAMP: f64 = 1e-9;

/// Bracket expansion gives up once `|y|` exceeds this.
pub const MAX_BRACKET: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("volatility must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("all posterior weights underflow at t = {t}, y = {y}")]
    NumericalUnderflow { t: f64, y: f64 },
    #[error("drift value {x} lies outside the support interval [{lo}, {hi}]")]
    OutOfSupport { x: f64, lo: f64, hi: f64 },
    #[error("could not bracket the posterior-mean inverse at t = {t}, x = {x} within |y| <= 1e9")]
    BracketFailure { t: f64, x: f64 },
}

/// The filtering problem: a validated prior plus the known volatility.
#[derive(Debug, Clone)]
pub struct FilterModel {
    prior: Prior,
    sigma: f64,
    support: (f64, f64),
    atoms: Option<Atoms>,
}

#[derive(Debug, Clone)]
struct Atoms {
    points: Vec<f64>,
    log_weights: Vec<f64>,
}

impl FilterModel {
    pub fn new(prior: Prior, sigma: f64) -> Result<Self, FilterError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(FilterError::InvalidSigma(sigma));
        }
        prior.validate()?;
        let support = prior.support_interval();
        let atoms = prior.atoms().map(|(points, weights)| {
            let log_weights = weights.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
            Atoms { points, log_weights }
        });
        Ok(FilterModel { prior, sigma, support, atoms })
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Same prior with a different volatility.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self, FilterError> {
        FilterModel::new(self.prior.clone(), sigma)
    }

    /// Raw posterior moments `E_{t,y}[X^k]` for `k = 1..=4`.
    pub fn posterior_moments(&self, t: f64, y: f64) -> Result<[f64; 4], FilterError> {
        match (&self.prior, &self.atoms) {
            (Prior::Normal { m, gamma }, _) => {
                let (mean, var) = self.normal_posterior(*m, *gamma, t, y);
                Ok(normal_moments(mean, var))
            }
            (_, Some(atoms)) => {
                let max = self.max_exponent(atoms, t, y)?;
                let s2 = 2.0 * self.sigma * self.sigma;
                let mut sums = [0.0; 5];
                for (u, lw) in atoms.points.iter().zip(&atoms.log_weights) {
                    let w = (lw + (2.0 * u * y - u * u * t) / s2 - max).exp();
                    let mut p = w;
                    for s in sums.iter_mut() {
                        *s += p;
                        p *= u;
                    }
                }
                let z = sums[0];
                Ok([sums[1] / z, sums[2] / z, sums[3] / z, sums[4] / z])
            }
            _ => unreachable!("finite priors always carry atoms"),
        }
    }

    pub fn posterior_moment(&self, t: f64, y: f64, k: u32) -> Result<f64, FilterError> {
        assert!((1..=4).contains(&k), "posterior moments are exposed for k = 1..=4");
        Ok(self.posterior_moments(t, y)?[k as usize - 1])
    }

    /// `f(t, y) = E[X | Y_t = y]`.
    pub fn posterior_mean(&self, t: f64, y: f64) -> Result<f64, FilterError> {
        match (&self.prior, &self.atoms) {
            (Prior::Normal { m, gamma }, _) => Ok(self.normal_posterior(*m, *gamma, t, y).0),
            (_, Some(atoms)) => {
                let max = self.max_exponent(atoms, t, y)?;
                let s2 = 2.0 * self.sigma * self.sigma;
                let (mut z, mut num) = (0.0, 0.0);
                for (u, lw) in atoms.points.iter().zip(&atoms.log_weights) {
                    let w = (lw + (2.0 * u * y - u * u * t) / s2 - max).exp();
                    z += w;
                    num += w * u;
                }
                Ok(num / z)
            }
            _ => unreachable!(),
        }
    }

    /// Posterior mean and variance in one pass.
    pub fn posterior_mean_var(&self, t: f64, y: f64) -> Result<(f64, f64), FilterError> {
        if let Prior::Normal { m, gamma } = &self.prior {
            return Ok(self.normal_posterior(*m, *gamma, t, y));
        }
        let [m1, m2, ..] = self.posterior_moments(t, y)?;
        Ok((m1, (m2 - m1 * m1).max(0.0)))
    }

    fn normal_posterior(&self, m: f64, gamma: f64, t: f64, y: f64) -> (f64, f64) {
        let s2 = self.sigma * self.sigma;
        let g2 = gamma * gamma;
        let denom = s2 + t * g2;
        ((s2 * m + g2 * y) / denom, s2 * g2 / denom)
    }

    fn max_exponent(&self, atoms: &Atoms, t: f64, y: f64) -> Result<f64, FilterError> {
        let s2 = 2.0 * self.sigma * self.sigma;
        let max = atoms
            .points
            .iter()
            .zip(&atoms.log_weights)
            .map(|(u, lw)| lw + (2.0 * u * y - u * u * t) / s2)
            .fold(f64::NEG_INFINITY, f64::max);
        if max.is_finite() {
            Ok(max)
        } else {
            Err(FilterError::NumericalUnderflow { t, y })
        }
    }

    /// `y_x(t)`: the observation value whose posterior mean is `x`.
    /// Normal priors use the closed-form inverse; everything else goes
    /// through [`FilterModel::invert_mean_numeric`].
    pub fn invert_mean(&self, t: f64, x: f64) -> Result<f64, FilterError> {
        if let Prior::Normal { m, gamma } = &self.prior {
            let s2 = self.sigma * self.sigma;
            let g2 = gamma * gamma;
            return Ok((x * (s2 + t * g2) - s2 * m) / g2);
        }
        self.invert_mean_numeric(t, x, 0.0)
    }

    /// Root-finder for `f(t, y) = x`: geometric bracket expansion from
    /// `y_start`, then Newton steps (slope `Var/σ²`) safeguarded by
    /// bisection. Converges to `|f(t, y) - x| <= 1e-10 max(1, |x|)`.
    pub fn invert_mean_numeric(&self, t: f64, x: f64, y_start: f64) -> Result<f64, FilterError> {
        let (lo_s, hi_s) = self.support;
        if !(x >= lo_s && x <= hi_s) {
            return Err(FilterError::OutOfSupport { x, lo: lo_s, hi: hi_s });
        }
        // f(t, ·) only reaches a finite endpoint once the other weights
        // underflow, so there is no genuine root to find.
        if x == lo_s || x == hi_s {
            return Err(FilterError::BracketFailure { t, x });
        }
        let tol = 1e-10 * x.abs().max(1.0);
        let s2 = self.sigma * self.sigma;

        let f0 = self.posterior_mean(t, y_start)?;
        if (f0 - x).abs() <= tol {
            return Ok(y_start);
        }
        let mut step = s2.max(1e-3);
        let (mut lo, mut hi);
        if f0 < x {
            lo = y_start;
            loop {
                hi = y_start + step;
                if hi.abs() > MAX_BRACKET {
                    return Err(FilterError::BracketFailure { t, x });
                }
                if self.posterior_mean(t, hi)? >= x {
                    break;
                }
                lo = hi;
                step *= 2.0;
            }
        } else {
            hi = y_start;
            loop {
                lo = y_start - step;
                if lo.abs() > MAX_BRACKET {
                    return Err(FilterError::BracketFailure { t, x });
                }
                if self.posterior_mean(t, lo)? <= x {
                    break;
                }
                hi = lo;
                step *= 2.0;
            }
        }

        // Once the tolerance is met a couple of extra Newton steps pin `y`
        // down as well, which matters where the slope is tiny.
        let mut polish = 0;
        let mut y = 0.5 * (lo + hi);
        for _ in 0..400 {
            let (mean, var) = self.posterior_mean_var(t, y)?;
            let gap = mean - x;
            if gap == 0.0 {
                return Ok(y);
            }
            if gap.abs() <= tol {
                polish += 1;
                if polish > 2 || (gap * s2 / var).abs() <= 1e-13 * y.abs().max(1.0) {
                    return Ok(y);
                }
            }
            if gap < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            if hi - lo <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
                return Ok(y);
            }
            let slope = var / s2;
            let newton = y - gap / slope;
            y = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Ok(y)
    }

    /// `ψ(t, x) = Var_{t, y_x(t)}(X) / σ`.
    pub fn dispersion(&self, t: f64, x: f64) -> Result<f64, FilterError> {
        self.dispersion_from(t, x, 0.0).map(|(psi, _)| psi)
    }

    /// Dispersion with a warm start for the inverse; returns `(ψ, y_x(t))`.
    /// The returned `y` is `NaN` when ψ came from a closed form or a clamp.
    fn dispersion_from(&self, t: f64, x: f64, y_start: f64) -> Result<(f64, f64), FilterError> {
        let (lo, hi) = self.support;
        if !(x >= lo && x <= hi) {
            return Err(FilterError::OutOfSupport { x, lo, hi });
        }
        match &self.prior {
            Prior::Normal { gamma, .. } => {
                let g2 = gamma * gamma;
                return Ok((self.sigma * g2 / (self.sigma * self.sigma + t * g2), f64::NAN));
            }
            Prior::TwoPoint { l, h, .. } => {
                return Ok((((h - x) * (x - l)).max(0.0) / self.sigma, f64::NAN));
            }
            _ => {}
        }
        if x - lo <= ENDPOINT_CLAMP || hi - x <= ENDPOINT_CLAMP {
            return Ok((0.0, f64::NAN));
        }
        let y = self.invert_mean_numeric(t, x, y_start)?;
        let (_, var) = self.posterior_mean_var(t, y)?;
        Ok((var / self.sigma, y))
    }

    pub fn evaluator(&self, t: f64) -> DispersionEvaluator<'_> {
        DispersionEvaluator { model: self, t, last_y: 0.0 }
    }

    /// ψ on a tensor grid, `out[i][j] = ψ(t_nodes[i], x_nodes[j])`. Rows are
    /// computed in parallel; each row is a sequential warm-started sweep,
    /// so the result does not depend on the thread count.
    pub fn dispersion_matrix(&self, t_nodes: &[f64], x_nodes: &[f64]) -> Result<Vec<Vec<f64>>, FilterError> {
        t_nodes
            .par_iter()
            .map(|&t| {
                let mut row = self.evaluator(t);
                x_nodes.iter().map(|&x| row.dispersion(x)).collect()
            })
            .collect()
    }
}

/// Dispersion evaluation along one time row, reusing the previous inverse
/// as the starting bracket for the next `x`.
pub struct DispersionEvaluator<'a> {
    model: &'a FilterModel,
    t: f64,
    last_y: f64,
}

impl DispersionEvaluator<'_> {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dispersion(&mut self, x: f64) -> Result<f64, FilterError> {
        let (psi, y) = self.model.dispersion_from(self.t, x, self.last_y)?;
        if y.is_finite() {
            self.last_y = y;
        }
        Ok(psi)
    }

    pub fn invert(&mut self, x: f64) -> Result<f64, FilterError> {
        let y = match self.model.prior() {
            Prior::Normal { .. } => self.model.invert_mean(self.t, x)?,
            _ => self.model.invert_mean_numeric(self.t, x, self.last_y)?,
        };
        self.last_y = y;
        Ok(y)
    }
}

/// `m4 m2 + 2 m3 m2 m1 - m4 m1² - m3² - m2³`, nonnegative for the raw
/// moments of any law with a finite fourth moment and zero exactly for one-
/// and two-point laws.
pub fn moment_inequality_value(m1: f64, m2: f64, m3: f64, m4: f64) -> f64 {
    m4 * m2 + 2.0 * m3 * m2 * m1 - m4 * m1 * m1 - m3 * m3 - m2 * m2 * m2
}
