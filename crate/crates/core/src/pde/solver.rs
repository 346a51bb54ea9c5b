use super::{Boundary, GridSpec, SolverError, ValueSurface};
use crate::filter::FilterModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Implicitness of the time step: 0.5 is Crank–Nicolson, 1 is backward
    /// Euler.
    pub theta: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { theta: 0.5 }
    }
}

/// How the two spatial edges are closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) enum Edges {
    /// Unbounded support: `v = 1` at `x_lo`, `∂_xx v = 0` at `x_hi`.
    Far,
    /// Compact support: ψ vanishes at both edges, leaving `∂_t v + x v = 0`.
    Degenerate,
}

impl Edges {
    pub(super) fn for_model(model: &FilterModel) -> Self {
        if model.prior().is_compact() {
            Edges::Degenerate
        } else {
            Edges::Far
        }
    }
}

/// Spatial operator `L = σψ ∂_x + ½ψ² ∂_xx + x` at node `j` as
/// `(lower, diag, upper)` coefficients. The drift uses central differences
/// unless that would give a negative neighbour weight, in which case it is
/// upwinded.
pub(super) fn stencil(edges: Edges, j: usize, n_x: usize, x: f64, psi: f64, sigma: f64, dx: f64) -> (f64, f64, f64) {
    let drift = sigma * psi;
    let diff = 0.5 * psi * psi / (dx * dx);
    if j == 0 {
        return match edges {
            // Dirichlet row; handled by the caller.
            Edges::Far => (0.0, 0.0, 0.0),
            Edges::Degenerate => (0.0, x - drift / dx, drift / dx),
        };
    }
    if j == n_x {
        return match edges {
            Edges::Far => (-drift / dx, x + drift / dx, 0.0),
            Edges::Degenerate => (0.0, x, 0.0),
        };
    }
    if psi >= sigma * dx {
        let adv = drift / (2.0 * dx);
        (diff - adv, -2.0 * diff + x, diff + adv)
    } else {
        (diff, -2.0 * diff - drift / dx + x, diff + drift / dx)
    }
}

/// Solves with the default θ = ½ (Crank–Nicolson).
pub fn solve_value(model: &FilterModel, grid: &GridSpec) -> Result<(ValueSurface, Boundary), SolverError> {
    solve_value_with(model, grid, &SolverOptions::default())
}

/// Backward induction from `v(T, ·) = 1`: one θ-step of the PDE, then the
/// projection `v ← max(v, 1)`. The boundary at each time is where the
/// unprojected continuation value crosses 1, located by linear
/// interpolation between the last stopping node and the first continuation
/// node.
pub fn solve_value_with(
    model: &FilterModel,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<(ValueSurface, Boundary), SolverError> {
    grid.validate_for(model)?;
    let theta = opts.theta;
    assert!((0.0..=1.0).contains(&theta), "theta must lie in [0, 1]");
    let (n_t, n_x) = (grid.n_t, grid.n_x);
    let dt = grid.dt();
    let edges = Edges::for_model(model);
    let xs = grid.x_nodes();
    let ts = grid.t_nodes();
    let psi = model.dispersion_matrix(&ts, &xs)?;

    let mut stepper = Stepper::new(model, grid, edges);
    let mut v = vec![vec![0.0; n_x + 1]; n_t + 1];
    v[n_t] = vec![1.0; n_x + 1];
    let mut h = vec![0.0; n_t + 1];

    for i in (0..n_t).rev() {
        let cont = stepper.step(&v[i + 1], &psi[i + 1], &psi[i], theta, dt, ts[i])?;
        v[i] = cont.iter().map(|u| u.max(1.0)).collect();
        h[i] = locate_boundary(cont, &xs).ok_or(SolverError::DomainTooNarrow { t: ts[i], x_lo: grid.x_lo })?;
    }

    Ok((ValueSurface { grid: *grid, v }, Boundary::new(ts, h)))
}

/// One θ-step of the PDE on a fixed spatial grid, with reusable work
/// arrays.
struct Stepper {
    edges: Edges,
    sigma: f64,
    dx: f64,
    xs: Vec<f64>,
    /// Reaction rate per node. At a degenerate upper edge this is the
    /// support endpoint rather than the (inset) node: started there the
    /// posterior mean converges to the endpoint.
    rate: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    cont: Vec<f64>,
}

impl Stepper {
    fn new(model: &FilterModel, grid: &GridSpec, edges: Edges) -> Self {
        let xs = grid.x_nodes();
        let n = xs.len();
        let mut rate = xs.clone();
        if edges == Edges::Degenerate {
            rate[n - 1] = model.support().1;
        }
        Stepper {
            edges,
            sigma: model.sigma(),
            dx: grid.dx(),
            xs,
            rate,
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
            cont: vec![0.0; n],
        }
    }

    /// Continuation value one step of length `dt` before `next`, with ψ
    /// rows at the later and earlier times.
    fn step(&mut self, next: &[f64], psi_next: &[f64], psi_now: &[f64], theta: f64, dt: f64, t: f64) -> Result<&[f64], SolverError> {
        let n = self.xs.len();
        let n_x = n - 1;
        for j in 0..n {
            if j == 0 && self.edges == Edges::Far {
                self.lower[j] = 0.0;
                self.diag[j] = 1.0;
                self.upper[j] = 0.0;
                self.rhs[j] = 1.0;
                continue;
            }
            let (a1, b1, c1) = stencil(self.edges, j, n_x, self.rate[j], psi_next[j], self.sigma, self.dx);
            let (a0, b0, c0) = stencil(self.edges, j, n_x, self.rate[j], psi_now[j], self.sigma, self.dx);
            let mut explicit = next[j] / dt + (1.0 - theta) * b1 * next[j];
            if j > 0 {
                explicit += (1.0 - theta) * a1 * next[j - 1];
            }
            if j < n_x {
                explicit += (1.0 - theta) * c1 * next[j + 1];
            }
            self.rhs[j] = explicit;
            self.lower[j] = -theta * a0;
            self.diag[j] = 1.0 / dt - theta * b0;
            self.upper[j] = -theta * c0;
            if self.diag[j].abs() < self.lower[j].abs() + self.upper[j].abs() {
                return Err(SolverError::GridTooCoarse { t, x: self.xs[j], ratio: dt / (self.dx * self.dx) });
            }
        }
        solve_tridiagonal(&self.lower, &mut self.diag, &self.upper, &mut self.rhs, &mut self.cont);
        Ok(&self.cont)
    }
}

/// Crossing of the continuation value through 1, or `None` when no node
/// above the lower edge is in the stopping set.
fn locate_boundary(cont: &[f64], xs: &[f64]) -> Option<f64> {
    let last_stop = cont.iter().rposition(|u| *u <= 1.0)?;
    if last_stop == 0 {
        return None;
    }
    if last_stop == cont.len() - 1 {
        return Some(xs[last_stop]);
    }
    let (u0, u1) = (cont[last_stop], cont[last_stop + 1]);
    let w = (1.0 - u0) / (u1 - u0);
    Some(xs[last_stop] + w * (xs[last_stop + 1] - xs[last_stop]))
}

/// Thomas algorithm. `diag` and `rhs` are overwritten.
pub(super) fn solve_tridiagonal(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64], out: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        let m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    out[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = (rhs[i] - upper[i] * out[i + 1]) / diag[i];
    }
}
