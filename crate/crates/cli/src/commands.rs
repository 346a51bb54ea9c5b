use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use driftstop_core::integral::{self, Engine, McConfig, ResidualOptions};
use driftstop_core::pde::{self, check_shape, check_smooth_fit, lipschitz_estimate};
use driftstop_core::sim::{self, ValueSource};
use driftstop_core::{io, Boundary, Estimate, FilterModel, GridSpec, Prior, ResidualReport, StoppingRule, ValueSurface};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EngineKind {
    Gauss,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    Sigma,
    Gamma,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Sigma => "sigma",
            Axis::Gamma => "gamma",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "sigma" => Ok(Axis::Sigma),
            "gamma" => Ok(Axis::Gamma),
            _ => Err(CliError::Config(format!("unknown sweep axis {s:?}; expected sigma or gamma"))),
        }
    }
}

/// Flag overrides shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub engine: Option<EngineKind>,
    pub boundary: Option<PathBuf>,
    pub axis: Option<Axis>,
    pub values: Option<Vec<f64>>,
}

/// One entry of `checks.json`. `tolerance` is null for checks that are
/// reported but never fail.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub tolerance: Option<f64>,
}

impl Check {
    fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Check { name: name.into(), pass: measured <= tolerance, measured, tolerance: Some(tolerance) }
    }

    fn report(name: &str, measured: f64) -> Self {
        Check { name: name.into(), pass: true, measured, tolerance: None }
    }
}

/// A loaded configuration with flag overrides applied.
pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub flags: Overrides,
}

impl Run {
    pub fn new(mut cfg: RunConfig, flags: Overrides) -> Result<Self, CliError> {
        if let Some(seed) = flags.seed {
            cfg.sim.seed = Some(seed);
        }
        let out = flags.out.clone().unwrap_or_else(|| cfg.outputs.clone());
        fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
        Ok(Run { cfg, out, flags })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out.join(name);
        let f = File::create(&path).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn solve(&self, model: &FilterModel) -> Result<(GridSpec, ValueSurface, Boundary), CliError> {
        let grid = self.cfg.grid_for(model)?;
        let (surface, boundary) = pde::solve_value(model, &grid)?;
        Ok((grid, surface, boundary))
    }

    /// The boundary from `--boundary` if given, otherwise the solved one.
    fn boundary_or(&self, solved: Boundary) -> Result<Boundary, CliError> {
        Ok(self.input_boundary()?.unwrap_or(solved))
    }

    fn input_boundary(&self) -> Result<Option<Boundary>, CliError> {
        let Some(path) = &self.flags.boundary else {
            return Ok(None);
        };
        let f = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let b = io::read_boundary_csv(BufReader::new(f))
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if b.t_nodes[0] != 0.0 || (b.horizon() - self.cfg.horizon).abs() > 1e-12 * self.cfg.horizon.max(1.0) {
            return Err(CliError::Config(format!(
                "{} covers [{}, {}], expected [0, {}]",
                path.display(),
                b.t_nodes[0],
                b.horizon(),
                self.cfg.horizon
            )));
        }
        Ok(Some(b))
    }

    fn engine(&self, model: &FilterModel) -> Result<Engine, CliError> {
        let normal = matches!(model.prior(), Prior::Normal { .. });
        let kind = self.flags.engine.unwrap_or(if normal { EngineKind::Gauss } else { EngineKind::Mc });
        match kind {
            EngineKind::Gauss if !normal => Err(CliError::Config(
                "the gauss engine needs a normal prior; use --engine mc".into(),
            )),
            EngineKind::Gauss => Ok(Engine::Gauss { nodes: self.cfg.verify.nodes }),
            EngineKind::Mc => {
                let sim = self.cfg.sim_config();
                Ok(Engine::MonteCarlo(McConfig { n_paths: self.cfg.verify.mc_paths, n_steps: sim.n_steps, seed: sim.seed }))
            }
        }
    }
}

#[derive(Serialize)]
struct SolveMeta<'a> {
    prior: &'a Prior,
    sigma: f64,
    #[serde(rename = "T")]
    horizon: f64,
    discount_r: f64,
    grid: &'a GridSpec,
    x0: f64,
    v0: f64,
    h0: f64,
    runtime_ms: f64,
}

pub fn solve(run: &Run) -> Result<(), CliError> {
    let start = Instant::now();
    let model = run.cfg.model()?;
    let (grid, surface, boundary) = run.solve(&model)?;
    let x0 = model.prior().mean();
    let v0 = surface.value_at(0.0, x0)?;
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;

    run.write_with("surface.csv", |w| io::write_surface_csv(w, &surface, run.cfg.surface_stride))?;
    run.write_with("boundary.csv", |w| io::write_boundary_csv(w, &boundary))?;
    let prior = run.cfg.prior()?;
    let meta = SolveMeta {
        prior: &prior,
        sigma: run.cfg.sigma,
        horizon: run.cfg.horizon,
        discount_r: run.cfg.discount_r,
        grid: &grid,
        x0,
        v0,
        h0: boundary.h[0],
        runtime_ms,
    };
    run.write_with("meta.json", |w| io::write_json(w, &meta))?;
    println!("v(0, {x0}) = {v0}");
    println!("h(0) = {}", boundary.h[0]);
    Ok(())
}

/// Shape, smooth-fit, boundary and residual checks; writes `residual.csv`.
fn verification_checks(run: &Run, model: &FilterModel) -> Result<(Vec<Check>, ValueSurface, Boundary), CliError> {
    let (grid, surface, solved) = run.solve(model)?;
    let boundary = run.boundary_or(solved.clone())?;
    let mut checks = Vec::new();

    let shape = check_shape(&surface);
    checks.push(Check::at_most("value_at_least_one", (1.0 - shape.min_value).max(0.0), 0.0));
    checks.push(Check::at_most("terminal_value_one", shape.terminal_defect, 0.0));
    checks.push(Check::at_most("value_nondecreasing_in_x", shape.max_row_decrease, 1e-9));
    checks.push(Check::at_most("value_convex_in_x", (-shape.min_relative_convexity).max(0.0), 1e-7));
    checks.push(Check::at_most("value_nonincreasing_in_t", shape.max_time_increase, 1e-9));

    // Smooth fit: the one-sided slope at the boundary must shrink under
    // spatial refinement.
    let fit = check_smooth_fit(&surface, &solved);
    if let Ok(coarse) = GridSpec::new(grid.horizon, grid.n_t, grid.x_lo, grid.x_hi, grid.n_x / 2) {
        let (cs, cb) = pde::solve_value(model, &coarse)?;
        checks.push(Check::at_most("smooth_fit_refines", fit, check_smooth_fit(&cs, &cb)));
    }
    checks.push(Check::report("smooth_fit_slope", fit));

    let top = boundary.h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most("boundary_nondecreasing", boundary.max_decrease(), 1e-9));
    checks.push(Check::at_most("boundary_nonpositive", top.max(0.0), 0.0));
    checks.push(Check::at_most("boundary_zero_at_horizon", boundary.h.last().unwrap().abs(), 0.0));

    let opts = ResidualOptions { engine: run.engine(model)?, stride: run.cfg.verify.stride };
    let report = integral::residual(model, &boundary, &opts)?;
    run.write_with("residual.csv", |w| io::write_residual_csv(w, &report))?;
    checks.push(Check::at_most("integral_equation_residual", report.max_abs, run.cfg.verify.residual_tol));
    checks.push(Check::at_most("residual_zero_at_horizon", terminal_residual(&report), 0.0));

    checks.push(Check::report("dispersion_lipschitz", lipschitz_estimate(model, &grid)?));
    Ok((checks, surface, boundary))
}

fn terminal_residual(report: &ResidualReport) -> f64 {
    report.residuals.last().map_or(0.0, |r| r.abs())
}

fn finish(run: &Run, checks: &[Check]) -> Result<(), CliError> {
    run.write_with("checks.json", |w| io::write_json(w, checks))?;
    for c in checks {
        let status = if c.pass { "pass" } else { "FAIL" };
        match c.tolerance {
            Some(tol) => println!("{status:4}  {:32} {:.3e} (tol {tol:.1e})", c.name, c.measured),
            None => println!("{status:4}  {:32} {:.3e}", c.name, c.measured),
        }
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

pub fn verify(run: &Run) -> Result<(), CliError> {
    let model = run.cfg.model()?;
    let (checks, _, _) = verification_checks(run, &model)?;
    finish(run, &checks)
}

fn rules(boundary: &Boundary) -> [StoppingRule; 4] {
    [
        StoppingRule::BoundaryRule { boundary: boundary.clone() },
        StoppingRule::Immediate,
        StoppingRule::Terminal,
        StoppingRule::ZeroOrT,
    ]
}

fn estimate_rules(run: &Run, model: &FilterModel, boundary: &Boundary) -> Result<Vec<(&'static str, Estimate)>, CliError> {
    let cfg = run.cfg.sim_config();
    let mut rows = Vec::new();
    for rule in rules(boundary) {
        let est = sim::simulate_value(model, run.cfg.horizon, &rule, &cfg)?;
        rows.push((rule.name(), est));
    }
    run.write_with("estimates.csv", |w| io::write_estimates_csv(w, &rows))?;
    Ok(rows)
}

pub fn simulate(run: &Run) -> Result<(), CliError> {
    let model = run.cfg.model()?;
    let boundary = match run.input_boundary()? {
        Some(b) => b,
        None => run.solve(&model)?.2,
    };
    for (name, est) in estimate_rules(run, &model, &boundary)? {
        println!("{name:10} {:.6} ± {:.6}", est.mean, est.stderr);
    }
    Ok(())
}

/// `simulate` plus `verify`, with Monte Carlo consistency checks against
/// the value surface and closed forms.
pub fn check(run: &Run) -> Result<(), CliError> {
    let model = run.cfg.model()?;
    let (mut checks, surface, boundary) = verification_checks(run, &model)?;
    let rows = estimate_rules(run, &model, &boundary)?;
    let get = |name: &str| rows.iter().find(|(n, _)| *n == name).unwrap().1;
    let (b, imm, term, zt) = (get("boundary"), get("immediate"), get("terminal"), get("zero_or_t"));
    let horizon = run.cfg.horizon;

    checks.push(Check::at_most("immediate_value_one", (imm.mean - 1.0).abs(), 0.0));
    let mgf = model.prior().exp_moment(horizon);
    checks.push(Check::at_most("terminal_matches_closed_form", (term.mean - mgf).abs(), 3.0 * term.stderr));
    checks.push(Check::at_most(
        "zero_or_t_matches_closed_form",
        (zt.mean - sim::naive_value(&model, horizon)).abs(),
        3.0 * zt.stderr,
    ));
    let v0 = surface.value_at(0.0, model.prior().mean())?;
    checks.push(Check::at_most("boundary_rule_matches_surface", (b.mean - v0).abs(), 3.0 * b.stderr));
    // Dominance: margin by which the best alternative beats the boundary
    // rule, against the combined noise of the two estimates.
    let (worst, tol) = [imm, term, zt]
        .iter()
        .map(|o| (o.mean - b.mean, 3.0 * (o.stderr.powi(2) + b.stderr.powi(2)).sqrt()))
        .fold((f64::NEG_INFINITY, 0.0), |acc, x| if x.0 - x.1 > acc.0 - acc.1 { x } else { acc });
    checks.push(Check::at_most("boundary_rule_dominates", worst, tol));
    finish(run, &checks)
}

pub fn sweep(run: &Run) -> Result<(), CliError> {
    let axis = match (run.flags.axis, &run.cfg.sweep.axis) {
        (Some(a), _) => a,
        (None, Some(s)) => Axis::parse(s)?,
        (None, None) => return Err(CliError::Config("sweep needs --axis or sweep.axis".into())),
    };
    let values = run
        .flags
        .values
        .clone()
        .or_else(|| run.cfg.sweep.values.clone())
        .ok_or_else(|| CliError::Config("sweep needs --values or sweep.values".into()))?;
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(CliError::Config(format!("sweep values must be positive, got {values:?}")));
    }
    let prior = run.cfg.prior()?;
    let models = values
        .iter()
        .map(|&v| match axis {
            Axis::Sigma => run.cfg.model_with(prior.clone(), v),
            Axis::Gamma => match prior {
                Prior::Normal { m, .. } => run.cfg.model_with(Prior::Normal { m, gamma: v }, run.cfg.sigma),
                _ => Err(CliError::Config(format!("a gamma sweep needs a normal prior, got {}", prior.kind_name()))),
            },
        })
        .collect::<Result<Vec<_>, _>>()?;

    // One spatial grid for all values, wide enough for each of them.
    let domain = models.iter().map(|m| pde::default_domain(m.prior())).fold((f64::INFINITY, f64::NEG_INFINITY), |a, d| {
        (a.0.min(d.0), a.1.max(d.1))
    });
    let sim_cfg = run.cfg.sim_config();
    let mut rows = Vec::new();
    let mut boundaries = Vec::new();
    for (v, model) in values.iter().zip(&models) {
        let grid = run.cfg.grid_on(model, domain)?;
        let (surface, boundary) = pde::solve_value(model, &grid)?;
        let source =
            if run.cfg.sweep.simulate { ValueSource::Simulated(&sim_cfg) } else { ValueSource::Surface(&surface) };
        let imp = sim::improvement(model, run.cfg.horizon, &boundary, source)?;
        rows.push(io::SweepRow { value: *v, value_filtered: imp.value, value_naive: imp.naive, improvement: imp.relative });
        run.write_with(&format!("boundary_{}_{v}.csv", axis.name()), |w| io::write_boundary_csv(w, &boundary))?;
        println!("{}={v}: value {:.6}, improvement {:.4}", axis.name(), imp.value, imp.relative);
        boundaries.push(boundary);
    }
    run.write_with("sweep.csv", |w| io::write_sweep_csv(w, axis.name(), &rows))?;
    run.write_with("boundaries.csv", |w| write_overlay(w, axis.name(), &values, &boundaries))?;
    Ok(())
}

/// Wide `t,<axis>=v1,<axis>=v2,...` table for overlay plots; all
/// boundaries share the time grid.
fn write_overlay<W: Write>(mut w: W, axis: &str, values: &[f64], boundaries: &[Boundary]) -> std::io::Result<()> {
    write!(w, "t")?;
    for v in values {
        write!(w, ",{axis}={v}")?;
    }
    writeln!(w)?;
    for t in &boundaries[0].t_nodes {
        write!(w, "{t}")?;
        for b in boundaries {
            write!(w, ",{}", b.at(*t))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `t,x,psi` on every `surface_stride`-th time row of the grid.
pub fn psi_table(run: &Run) -> Result<(), CliError> {
    let model = run.cfg.model()?;
    let grid = run.cfg.grid_for(&model)?;
    let mut rows: Vec<usize> = (0..=grid.n_t).step_by(run.cfg.surface_stride).collect();
    if *rows.last().unwrap() != grid.n_t {
        rows.push(grid.n_t);
    }
    let ts: Vec<f64> = rows.iter().map(|&i| grid.t(i)).collect();
    let xs = grid.x_nodes();
    let psi = model.dispersion_matrix(&ts, &xs)?;
    run.write_with("psi.csv", |w| {
        writeln!(w, "t,x,psi")?;
        for (t, row) in ts.iter().zip(&psi) {
            for (x, p) in xs.iter().zip(row) {
                writeln!(w, "{t},{x},{p}")?;
            }
        }
        Ok(())
    })
}
