use serde::Serialize;

use super::{Boundary, GridSpec, SolverError, ValueSurface};
use crate::filter::FilterModel;

/// Measured deviations from the structural properties of the value
/// function. All "max" fields are zero for a perfect surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeReport {
    pub min_value: f64,
    /// `max |v(T, x) - 1|`.
    pub terminal_defect: f64,
    /// Largest drop of `v` between neighbouring nodes in a row.
    pub max_row_decrease: f64,
    /// Most negative second difference in any row, divided by `max v`.
    pub min_relative_convexity: f64,
    /// Largest increase of `v` along a column going forward in time.
    pub max_time_increase: f64,
}

impl ShapeReport {
    /// Row monotonicity to `1e-9`, convexity to `1e-7 · max v`, time decay
    /// to `1e-9`.
    pub fn passes(&self) -> bool {
        self.min_value >= 1.0
            && self.terminal_defect == 0.0
            && self.max_row_decrease <= 1e-9
            && self.min_relative_convexity >= -1e-7
            && self.max_time_increase <= 1e-9
    }
}

pub fn check_shape(surface: &ValueSurface) -> ShapeReport {
    let v = &surface.v;
    let n_t = surface.grid.n_t;
    let scale = surface.max_value();
    let mut max_row_decrease: f64 = 0.0;
    let mut min_conv = f64::INFINITY;
    for row in v {
        for w in row.windows(2) {
            max_row_decrease = max_row_decrease.max(w[0] - w[1]);
        }
        for w in row.windows(3) {
            min_conv = min_conv.min((w[0] - 2.0 * w[1] + w[2]) / scale);
        }
    }
    let mut max_time_increase: f64 = 0.0;
    for i in 0..n_t {
        for (a, b) in v[i].iter().zip(&v[i + 1]) {
            max_time_increase = max_time_increase.max(b - a);
        }
    }
    ShapeReport {
        min_value: surface.min_value(),
        terminal_defect: v[n_t].iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max),
        max_row_decrease,
        min_relative_convexity: min_conv,
        max_time_increase,
    }
}

/// Largest one-sided slope `(v(t, h(t) + Δx) - 1) / Δx` over time rows
/// whose boundary lies at least one cell inside the grid. The terminal row
/// is excluded. Smooth fit means this tends to zero with `Δx`.
pub fn check_smooth_fit(surface: &ValueSurface, boundary: &Boundary) -> f64 {
    let g = &surface.grid;
    let dx = g.dx();
    let mut worst: f64 = 0.0;
    for i in 0..g.n_t {
        let h = boundary.at(g.t(i));
        if h - dx < g.x_lo || h + dx > g.x_hi {
            continue;
        }
        worst = worst.max((surface.row_value(i, h + dx) - 1.0) / dx);
    }
    worst
}

/// Finite-difference estimate of the Lipschitz constant of `ψ` in `x`
/// over the grid.
pub fn lipschitz_estimate(model: &FilterModel, grid: &GridSpec) -> Result<f64, SolverError> {
    let psi = model.dispersion_matrix(&grid.t_nodes(), &grid.x_nodes())?;
    let dx = grid.dx();
    Ok(psi
        .iter()
        .flat_map(|row| row.windows(2).map(move |w| (w[1] - w[0]).abs() / dx))
        .fold(0.0, f64::max))
}
