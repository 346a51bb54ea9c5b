use serde::Serialize;

use super::IntegralError;
use crate::filter::FilterModel;
use crate::prior::Prior;

/// Below this `ε = γ²(s - t0)/(σ² + t0 γ²)` the logarithmic closed forms
/// lose digits to cancellation and the power series take over.
const SERIES_CUTOFF: f64 = 0.05;
const SERIES_TERMS: usize = 24;

/// Joint law under `Q` of `(X̂_s, I_s)`, `I_s = ∫_{t0}^s X̂_u du`, for a
/// normal prior started at `X̂_{t0} = x0`.
///
/// With `β(u) = σγ²/(σ² + uγ²)` the conditional mean follows
/// `dX̂ = σβ dt + β dZ`, so the pair is jointly Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianLawQ {
    pub t0: f64,
    pub x0: f64,
    pub s: f64,
    pub mean_x: f64,
    pub var_x: f64,
    pub mean_i: f64,
    pub var_i: f64,
    pub cov_xi: f64,
}

impl GaussianLawQ {
    /// `E^Q[exp(I_s)]`.
    pub fn exp_mean_i(&self) -> f64 {
        (self.mean_i + 0.5 * self.var_i).exp()
    }

    pub fn corr(&self) -> f64 {
        if self.var_x <= 0.0 || self.var_i <= 0.0 {
            0.0
        } else {
            self.cov_xi / (self.var_x * self.var_i).sqrt()
        }
    }
}

/// Closed-form moments of `(X̂_s, I_s)` started from `(t0, x0)`.
pub fn gaussian_law(model: &FilterModel, t0: f64, x0: f64, s: f64) -> Result<GaussianLawQ, IntegralError> {
    let Prior::Normal { gamma, .. } = model.prior() else {
        return Err(IntegralError::WrongPriorKind(model.prior().kind_name()));
    };
    assert!(s >= t0, "law requested before its start time");
    let s2 = model.sigma() * model.sigma();
    let g2 = gamma * gamma;
    let tau = s - t0;
    let a0 = s2 + t0 * g2;
    let a_s = s2 + s * g2;
    let eps = g2 * tau / a0;

    let (ln_rho, g_over_eps, f1, f2_over_eps) = if eps < SERIES_CUTOFF {
        series(eps)
    } else {
        let rho = 1.0 + eps;
        let l = eps.ln_1p();
        (l, (rho * l - eps) / eps, eps - l, (rho * rho - 1.0 - 2.0 * rho * l) / eps)
    };

    Ok(GaussianLawQ {
        t0,
        x0,
        s,
        mean_x: x0 + s2 * ln_rho,
        var_x: s2 * g2 * g2 * tau / (a0 * a_s),
        mean_i: x0 * tau + s2 * tau * g_over_eps,
        var_i: (s2 * tau * f2_over_eps).max(0.0),
        cov_xi: s2 * f1,
    })
}

/// `(ln(1+ε), g(ε)/ε, f1(ε), f2(ε)/ε)` by their Taylor series, where
/// `g = ρ ln ρ - ρ + 1`, `f1 = ρ - 1 - ln ρ`, `f2 = ρ² - 1 - 2ρ ln ρ`,
/// `ρ = 1 + ε`.
fn series(eps: f64) -> (f64, f64, f64, f64) {
    let (mut ln_rho, mut g, mut f1, mut f2) = (0.0, 0.0, 0.0, 0.0);
    // p = (-1)^n ε^(n-1)
    let mut p = 1.0;
    for n in 1..=SERIES_TERMS {
        p *= -if n == 1 { 1.0 } else { eps };
        let nf = n as f64;
        ln_rho -= p * eps / nf;
        if n >= 2 {
            g += p / (nf * (nf - 1.0));
            f1 += p * eps / nf;
        }
        if n >= 3 {
            f2 -= 2.0 * p / (nf * (nf - 1.0));
        }
    }
    (ln_rho, g, f1, f2)
}
