//! Backward induction for the Markovian value function
//! `v(t, x) = sup_τ E^Q[exp(∫_t^{t+τ} X̂ ds)]`.
//!
//! The value solves `∂_t v + σψ ∂_x v + ½ψ² ∂_xx v + x v = 0` where
//! `v > 1` and equals 1 on the stopping set. Stopping is allowed on the
//! time grid only (a Bermudan approximation); between exercise dates the
//! PDE is advanced with a θ-scheme.

mod checks;
mod lattice;
mod solver;

pub use checks::{check_shape, check_smooth_fit, lipschitz_estimate, ShapeReport};
pub use lattice::euler_lattice_value;
pub use solver::{solve_value, solve_value_with, SolverOptions};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{FilterError, FilterModel};
use crate::prior::Prior;

/// Half-width of the default spatial domain for normal priors, in prior
/// standard deviations.
pub const NORMAL_DOMAIN_WIDTH: f64 = 6.0;

/// Relative inset of the default domain from the ends of a compact support.
pub const COMPACT_INSET: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("tridiagonal system lost diagonal dominance at t = {t}, x = {x} (dt/dx² = {ratio})")]
    GridTooCoarse { t: f64, x: f64, ratio: f64 },
    #[error("stopping boundary reaches the lower edge x = {x_lo} at t = {t}; widen the domain")]
    DomainTooNarrow { t: f64, x_lo: f64 },
    #[error("explicit scheme unstable: dt = {dt} exceeds the limit {required}")]
    StabilityViolation { dt: f64, required: f64 },
    #[error("point (t = {t}, x = {x}) lies outside the grid")]
    OutOfGrid { t: f64, x: f64 },
}

/// Uniform `(t, x)` lattice: `n_t` time steps on `[0, T]`, `n_x` spatial
/// intervals on `[x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_t: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_x: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, n_t: usize, x_lo: f64, x_hi: f64, n_x: usize) -> Result<Self, SolverError> {
        let g = GridSpec { horizon, n_t, x_lo, x_hi, n_x };
        g.validate()?;
        Ok(g)
    }

    /// Default domain for `model`: `x̂₀ ± 6γ` for normal priors, the
    /// slightly inset support interval otherwise.
    pub fn for_model(model: &FilterModel, horizon: f64, n_t: usize, n_x: usize) -> Result<Self, SolverError> {
        let (x_lo, x_hi) = default_domain(model.prior());
        GridSpec::new(horizon, n_t, x_lo, x_hi, n_x)
    }

    /// Default resolution: 2000 steps per year and 400 spatial intervals.
    pub fn default_for(model: &FilterModel, horizon: f64) -> Result<Self, SolverError> {
        let n_t = ((2000.0 * horizon).ceil() as usize).max(2);
        GridSpec::for_model(model, horizon, n_t, 400)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SolverError::InvalidGrid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_t < 2 {
            return Err(SolverError::InvalidGrid(format!("need n_t >= 2, got {}", self.n_t)));
        }
        if self.n_x < 3 {
            return Err(SolverError::InvalidGrid(format!("need n_x >= 3, got {}", self.n_x)));
        }
        if !(self.x_lo < 0.0 && 0.0 < self.x_hi) {
            return Err(SolverError::InvalidGrid(format!(
                "domain [{}, {}] must contain 0 in its interior",
                self.x_lo, self.x_hi
            )));
        }
        Ok(())
    }

    /// Additionally requires the domain to sit inside the closed support.
    pub fn validate_for(&self, model: &FilterModel) -> Result<(), SolverError> {
        self.validate()?;
        let (lo, hi) = model.support();
        if self.x_lo < lo || self.x_hi > hi {
            return Err(SolverError::InvalidGrid(format!(
                "domain [{}, {}] exceeds the support [{lo}, {hi}]",
                self.x_lo, self.x_hi
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.n_x as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.n_t {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        if j == self.n_x {
            self.x_hi
        } else {
            self.x_lo + j as f64 * self.dx()
        }
    }

    pub fn t_nodes(&self) -> Vec<f64> {
        (0..=self.n_t).map(|i| self.t(i)).collect()
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..=self.n_x).map(|j| self.x(j)).collect()
    }
}

/// Spatial domain used when none is given: `[min(m - 6γ, -6γ), max(m + 6γ, 6γ)]`
/// for normal priors, the support inset by a relative `1e-6` otherwise.
pub fn default_domain(prior: &Prior) -> (f64, f64) {
    match prior {
        Prior::Normal { m, gamma } => {
            let half = NORMAL_DOMAIN_WIDTH * gamma;
            ((m - half).min(-half), (m + half).max(half))
        }
        _ => {
            let (lo, hi) = prior.support_interval();
            let inset = COMPACT_INSET * (hi - lo);
            (lo + inset, hi - inset)
        }
    }
}

/// Grid solution `v[i][j] = v(t_i, x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSurface {
    pub grid: GridSpec,
    pub v: Vec<Vec<f64>>,
}

impl ValueSurface {
    /// Bilinear interpolation; exact at nodes.
    pub fn value_at(&self, t: f64, x: f64) -> Result<f64, SolverError> {
        let g = &self.grid;
        let eps = 1e-12 * g.horizon.max(1.0);
        if !(t >= -eps && t <= g.horizon + eps && x >= g.x_lo - eps && x <= g.x_hi + eps) {
            return Err(SolverError::OutOfGrid { t, x });
        }
        let (i, wt) = locate(t, 0.0, g.dt(), g.n_t);
        let (j, wx) = locate(x, g.x_lo, g.dx(), g.n_x);
        let lo = lerp(self.v[i][j], self.v[i][j + 1], wx);
        let hi = lerp(self.v[i + 1][j], self.v[i + 1][j + 1], wx);
        Ok(lerp(lo, hi, wt))
    }

    /// Linear interpolation within time row `i`.
    pub fn row_value(&self, i: usize, x: f64) -> f64 {
        let g = &self.grid;
        let (j, w) = locate(x.clamp(g.x_lo, g.x_hi), g.x_lo, g.dx(), g.n_x);
        lerp(self.v[i][j], self.v[i][j + 1], w)
    }

    pub fn max_value(&self) -> f64 {
        self.v.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.v.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Cell index and in-cell weight for `z` on the lattice `origin + k·step`.
fn locate(z: f64, origin: f64, step: f64, n: usize) -> (usize, f64) {
    let s = ((z - origin) / step).max(0.0);
    let k = (s.floor() as usize).min(n - 1);
    (k, (s - k as f64).clamp(0.0, 1.0))
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    if w == 0.0 {
        a
    } else {
        a + (b - a) * w
    }
}

/// Stopping boundary `h(t)`: sell the first time the posterior mean falls
/// to or below `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub t_nodes: Vec<f64>,
    pub h: Vec<f64>,
}

impl Boundary {
    pub fn new(t_nodes: Vec<f64>, h: Vec<f64>) -> Self {
        assert_eq!(t_nodes.len(), h.len(), "boundary times and values differ in length");
        assert!(t_nodes.len() >= 2, "boundary needs at least two nodes");
        Boundary { t_nodes, h }
    }

    pub fn horizon(&self) -> f64 {
        *self.t_nodes.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Piecewise-linear interpolation, clamped to the end values.
    pub fn at(&self, t: f64) -> f64 {
        let ts = &self.t_nodes;
        if t <= ts[0] {
            return self.h[0];
        }
        if t >= ts[ts.len() - 1] {
            return self.h[ts.len() - 1];
        }
        let k = ts.partition_point(|s| *s <= t).saturating_sub(1).min(ts.len() - 2);
        let w = (t - ts[k]) / (ts[k + 1] - ts[k]);
        lerp(self.h[k], self.h[k + 1], w)
    }

    /// Same curve moved by `delta`, keeping it non-positive.
    pub fn shifted(&self, delta: f64) -> Boundary {
        Boundary {
            t_nodes: self.t_nodes.clone(),
            h: self.h.iter().map(|h| (h + delta).min(0.0)).collect(),
        }
    }

    /// Restriction to every `stride`-th node (the last node is always kept).
    pub fn subsample(&self, stride: usize) -> Boundary {
        let stride = stride.max(1);
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
        if *idx.last().unwrap() != n - 1 {
            idx.push(n - 1);
        }
        Boundary {
            t_nodes: idx.iter().map(|&k| self.t_nodes[k]).collect(),
            h: idx.iter().map(|&k| self.h[k]).collect(),
        }
    }

    /// Largest decrease between consecutive nodes (0 for a non-decreasing
    /// curve).
    pub fn max_decrease(&self) -> f64 {
        self.h.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max)
    }

    /// Non-decreasing (up to `tol`), non-positive and zero at the horizon.
    pub fn satisfies_invariants(&self, tol: f64) -> bool {
        self.max_decrease() <= tol && self.h.iter().all(|h| *h <= 0.0) && *self.h.last().unwrap() == 0.0
    }
}
