//! Prior distributions for the unknown drift.
//!
//! A [`Prior`] is the only Bayesian input of the model. Four families are
//! supported: a two-point law, a normal law, a finite discrete law and a
//! quadrature-sampled density. The last two share the same numerical
//! representation (weighted atoms); they differ only in how they were built.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `sum(weights) == 1` after normalization.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Default number of nodes used by [`Prior::from_density`].
pub const DEFAULT_DENSITY_NODES: usize = 201;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("prior puts no mass on {side} drifts; the selling problem is trivial")]
    SignMassViolation { side: &'static str },
    #[error("degenerate prior parameter: {0}")]
    DegenerateParameter(String),
    #[error("shifting the prior by r = {r} leaves no mass on {side} drifts")]
    ShiftBreaksSignMass { r: f64, side: &'static str },
    #[error("operation not supported for {0} priors")]
    UnsupportedKind(&'static str),
}

/// Distribution of the unknown drift `X` (units: drift per year).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    /// `pi * δ_h + (1 - pi) * δ_l`.
    TwoPoint { l: f64, h: f64, pi: f64 },
    /// `N(m, gamma²)`.
    Normal { m: f64, gamma: f64 },
    Discrete { points: Vec<f64>, weights: Vec<f64> },
    /// A density sampled at `nodes`; `weights` are positive integration
    /// weights and are normalized on construction.
    Quadrature { nodes: Vec<f64>, weights: Vec<f64> },
}

impl Prior {
    pub fn two_point(l: f64, h: f64, pi: f64) -> Self {
        Prior::TwoPoint { l, h, pi }
    }

    pub fn normal(m: f64, gamma: f64) -> Self {
        Prior::Normal { m, gamma }
    }

    pub fn discrete(points: Vec<f64>, weights: Vec<f64>) -> Self {
        Prior::Discrete { points, weights }
    }

    /// Builds a quadrature prior, normalizing the weights to a probability
    /// vector.
    pub fn quadrature(nodes: Vec<f64>, weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        let weights = if total > 0.0 && total.is_finite() {
            weights.iter().map(|w| w / total).collect()
        } else {
            weights
        };
        Prior::Quadrature { nodes, weights }
    }

    /// Samples an (unnormalized) density on `n` equally spaced nodes of
    /// `[lo, hi]` with composite Simpson weights. `n` is bumped to the next
    /// odd number.
    pub fn from_density<F: Fn(f64) -> f64>(density: F, lo: f64, hi: f64, n: usize) -> Self {
        let n = if n.is_multiple_of(2) { n + 1 } else { n.max(3) };
        let step = (hi - lo) / (n - 1) as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let u = lo + step * i as f64;
            let simpson = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            nodes.push(u);
            weights.push(simpson * density(u).max(0.0));
        }
        Prior::quadrature(nodes, weights)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Prior::TwoPoint { .. } => "two_point",
            Prior::Normal { .. } => "normal",
            Prior::Discrete { .. } => "discrete",
            Prior::Quadrature { .. } => "quadrature",
        }
    }

    /// Atoms and probabilities for the finitely supported kinds. Atoms with
    /// zero weight are kept so node sets stay stable.
    pub fn atoms(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Prior::TwoPoint { l, h, pi } => Some((vec![*l, *h], vec![1.0 - pi, *pi])),
            Prior::Normal { .. } => None,
            Prior::Discrete { points, weights } => Some((points.clone(), weights.clone())),
            Prior::Quadrature { nodes, weights } => Some((nodes.clone(), weights.clone())),
        }
    }

    /// Checks every invariant: parameter sanity, probability weights and
    /// mass on both sides of zero.
    pub fn validate(&self) -> Result<(), PriorError> {
        match self {
            Prior::TwoPoint { l, h, pi } => {
                if !(l.is_finite() && h.is_finite() && pi.is_finite()) {
                    return Err(PriorError::DegenerateParameter("non-finite two-point parameter".into()));
                }
                if l >= h {
                    return Err(PriorError::DegenerateParameter(format!("two-point requires l < h, got l = {l}, h = {h}")));
                }
                if !(*pi > 0.0 && *pi < 1.0) {
                    return Err(PriorError::DegenerateParameter(format!("two-point requires 0 < pi < 1, got {pi}")));
                }
            }
            Prior::Normal { m, gamma } => {
                if !m.is_finite() || !gamma.is_finite() {
                    return Err(PriorError::DegenerateParameter("non-finite normal parameter".into()));
                }
                if *gamma <= 0.0 {
                    return Err(PriorError::DegenerateParameter(format!("normal requires gamma > 0, got {gamma}")));
                }
                // Full support: both half-lines carry mass.
                return Ok(());
            }
            Prior::Discrete { points, weights } | Prior::Quadrature { nodes: points, weights } => {
                validate_weights(points, weights)?;
            }
        }
        check_sign_mass(self)
    }

    /// `∫ u^k μ(du)` for `k ∈ 0..=4`.
    pub fn raw_moment(&self, k: u32) -> f64 {
        assert!(k <= 4, "moments beyond the fourth are not exposed");
        match self {
            Prior::Normal { m, gamma } => normal_raw_moment(*m, gamma * gamma, k),
            _ => {
                let (points, weights) = self.atoms().expect("finite support");
                if k == 0 {
                    return 1.0;
                }
                weights.iter().zip(&points).map(|(w, u)| w * u.powi(k as i32)).sum()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    /// Law of `X - r`. Used to fold a constant discount rate into the drift.
    /// Only the sign-mass condition is checked; other invariants are left to
    /// [`Prior::validate`].
    pub fn shift(&self, r: f64) -> Result<Prior, PriorError> {
        let shifted = self.shifted_unchecked(r);
        match check_sign_mass(&shifted) {
            Ok(()) => Ok(shifted),
            Err(PriorError::SignMassViolation { side }) => Err(PriorError::ShiftBreaksSignMass { r, side }),
            Err(e) => Err(e),
        }
    }

    pub(crate) fn shifted_unchecked(&self, r: f64) -> Prior {
        match self {
            Prior::TwoPoint { l, h, pi } => Prior::TwoPoint { l: l - r, h: h - r, pi: *pi },
            Prior::Normal { m, gamma } => Prior::Normal { m: m - r, gamma: *gamma },
            Prior::Discrete { points, weights } => Prior::Discrete {
                points: points.iter().map(|u| u - r).collect(),
                weights: weights.clone(),
            },
            Prior::Quadrature { nodes, weights } => Prior::Quadrature {
                nodes: nodes.iter().map(|u| u - r).collect(),
                weights: weights.clone(),
            },
        }
    }

    /// Interior of the smallest closed interval containing the support.
    pub fn support_interval(&self) -> (f64, f64) {
        match self {
            Prior::TwoPoint { l, h, .. } => (*l, *h),
            Prior::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Prior::Discrete { points, weights } | Prior::Quadrature { nodes: points, weights } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (u, w) in points.iter().zip(weights) {
                    if *w > 0.0 {
                        lo = lo.min(*u);
                        hi = hi.max(*u);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self, Prior::Normal { .. })
    }

    /// Reweights the prior by `exp(ε u² / (2σ²))`. Starting the filter at
    /// time `-ε` from the returned law reproduces the time-0 posteriors of
    /// `self`, which lets the observation process start away from zero.
    pub fn epsilon_extension(&self, epsilon: f64, sigma: f64) -> Result<Prior, PriorError> {
        if epsilon < 0.0 || !epsilon.is_finite() {
            return Err(PriorError::DegenerateParameter(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(PriorError::DegenerateParameter(format!("sigma must be > 0, got {sigma}")));
        }
        let (points, weights) = match self {
            Prior::Discrete { points, weights } | Prior::Quadrature { nodes: points, weights } => (points, weights),
            Prior::TwoPoint { .. } => return Err(PriorError::UnsupportedKind("two_point (pass it as discrete)")),
            Prior::Normal { .. } => return Err(PriorError::UnsupportedKind("normal")),
        };
        let scale = epsilon / (2.0 * sigma * sigma);
        let logs: Vec<f64> = points
            .iter()
            .zip(weights)
            .map(|(u, w)| if *w > 0.0 { w.ln() + scale * u * u } else { f64::NEG_INFINITY })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        let new_weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        Ok(match self {
            Prior::Discrete { .. } => Prior::Discrete { points: points.clone(), weights: new_weights },
            _ => Prior::Quadrature { nodes: points.clone(), weights: new_weights },
        })
    }

    /// `E[exp(X T)]`, the expected sale price at `T` with no learning.
    pub fn exp_moment(&self, horizon: f64) -> f64 {
        match self {
            Prior::Normal { m, gamma } => (m * horizon + 0.5 * (gamma * horizon).powi(2)).exp(),
            _ => {
                let (points, weights) = self.atoms().expect("finite support");
                weights.iter().zip(&points).map(|(w, u)| w * (u * horizon).exp()).sum()
            }
        }
    }
}

fn normal_raw_moment(m: f64, var: f64, k: u32) -> f64 {
    match k {
        0 => 1.0,
        1 => m,
        2 => m * m + var,
        3 => m * m * m + 3.0 * m * var,
        4 => m.powi(4) + 6.0 * m * m * var + 3.0 * var * var,
        _ => unreachable!(),
    }
}

pub(crate) fn normal_moments(m: f64, var: f64) -> [f64; 4] {
    [
        normal_raw_moment(m, var, 1),
        normal_raw_moment(m, var, 2),
        normal_raw_moment(m, var, 3),
        normal_raw_moment(m, var, 4),
    ]
}

fn validate_weights(points: &[f64], weights: &[f64]) -> Result<(), PriorError> {
    if points.is_empty() {
        return Err(PriorError::DegenerateParameter("empty support".into()));
    }
    if points.len() != weights.len() {
        return Err(PriorError::DegenerateParameter(format!(
            "{} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    if points.iter().any(|u| !u.is_finite()) {
        return Err(PriorError::DegenerateParameter("non-finite support point".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(PriorError::DegenerateParameter(format!("weight {w} is not a nonnegative number")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(PriorError::DegenerateParameter(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

fn check_sign_mass(prior: &Prior) -> Result<(), PriorError> {
    let (neg, pos) = match prior {
        Prior::Normal { .. } => return Ok(()),
        _ => {
            let (points, weights) = prior.atoms().expect("finite support");
            let neg: f64 = points.iter().zip(&weights).filter(|(u, _)| **u < 0.0).map(|(_, w)| w).sum();
            let pos: f64 = points.iter().zip(&weights).filter(|(u, _)| **u > 0.0).map(|(_, w)| w).sum();
            (neg, pos)
        }
    };
    if neg <= 0.0 {
        return Err(PriorError::SignMassViolation { side: "negative" });
    }
    if pos <= 0.0 {
        return Err(PriorError::SignMassViolation { side: "positive" });
    }
    Ok(())
}
