use super::solver::{stencil, Edges};
use super::{GridSpec, SolverError, ValueSurface};
use crate::filter::FilterModel;

/// Explicit dynamic programming on the same lattice as
/// [`solve_value`](super::solve_value):
///
/// `v(t_i, x) = max(1, e^{x Δt} · [p₋ v(t_{i+1}, x - Δx) + p₀ v(t_{i+1}, x) + p₊ v(t_{i+1}, x + Δx)])`
///
/// with transition weights from the drift `σψ` and variance `ψ²`. First
/// order in time and written independently of the implicit solver, so it
/// serves as a cross-check. Requires `Δt ≤ Δx² / max ψ²`.
pub fn euler_lattice_value(model: &FilterModel, grid: &GridSpec) -> Result<ValueSurface, SolverError> {
    grid.validate_for(model)?;
    let (n_t, n_x) = (grid.n_t, grid.n_x);
    let (dt, dx) = (grid.dt(), grid.dx());
    let sigma = model.sigma();
    let edges = Edges::for_model(model);
    let xs = grid.x_nodes();
    let ts = grid.t_nodes();
    let psi = model.dispersion_matrix(&ts, &xs)?;

    let max_psi = psi.iter().flatten().cloned().fold(0.0, f64::max);
    let required = dx * dx / (max_psi * max_psi);
    if dt > required {
        return Err(SolverError::StabilityViolation { dt, required });
    }

    let mut v = vec![vec![1.0; n_x + 1]; n_t + 1];
    for i in (0..n_t).rev() {
        let (done, todo) = v.split_at_mut(i + 1);
        let next = &todo[0];
        let row = &mut done[i];
        for j in 0..=n_x {
            if j == 0 && edges == Edges::Far {
                row[j] = 1.0;
                continue;
            }
            // The stencil carries the reaction term on its diagonal; strip it
            // to get the pure transition weights.
            let (a, b, c) = stencil(edges, j, n_x, xs[j], psi[i][j], sigma, dx);
            let (p_down, p_up) = (a * dt, c * dt);
            let p_stay = 1.0 + (b - xs[j]) * dt;
            // The far upper edge is a one-sided difference, not a transition.
            let interior = j > 0 && j < n_x;
            if interior && (p_stay < -1e-12 || p_down < -1e-12 || p_up < -1e-12) {
                return Err(SolverError::StabilityViolation { dt, required });
            }
            let mut expect = p_stay * next[j];
            if j > 0 {
                expect += p_down * next[j - 1];
            }
            if j < n_x {
                expect += p_up * next[j + 1];
            }
            row[j] = ((xs[j] * dt).exp() * expect).max(1.0);
        }
    }
    Ok(ValueSurface { grid: *grid, v })
}
