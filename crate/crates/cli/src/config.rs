use std::path::{Path, PathBuf};

use driftstop_core::pde::default_domain;
use driftstop_core::sim::Measure;
use driftstop_core::{FilterModel, GridSpec, Prior, SimConfig};
use serde::Deserialize;

use crate::error::CliError;

/// Run configuration as read from JSON. Everything but the prior, `sigma`
/// and `T` has a default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prior: Prior,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Discount rate `r`; the drift prior is replaced by the law of `X - r`.
    #[serde(default)]
    pub discount_r: f64,
    #[serde(default)]
    pub grid: GridOverrides,
    #[serde(default)]
    pub sim: SimOverrides,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub sweep: SweepOptions,
    /// Write every k-th time row of the value surface.
    #[serde(default = "default_surface_stride")]
    pub surface_stride: usize,
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

fn default_surface_stride() -> usize {
    10
}

/// Optional overrides of the default grid for the model.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    pub n_t: Option<usize>,
    pub n_x: Option<usize>,
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub seed: Option<u64>,
    pub measure: Option<Measure>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Residual evaluated at every k-th boundary node.
    pub stride: usize,
    pub residual_tol: f64,
    /// Quadrature order of the Gaussian engine.
    pub nodes: usize,
    /// Path count for the Monte Carlo engine.
    pub mc_paths: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { stride: 20, residual_tol: 2e-2, nodes: 64, mc_paths: 20_000 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    pub axis: Option<String>,
    pub values: Option<Vec<f64>>,
    /// Estimate the filtered value by simulation instead of reading it off
    /// the value surface.
    #[serde(default)]
    pub simulate: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::Config(format!("T must be positive, got {}", self.horizon)));
        }
        if !self.discount_r.is_finite() {
            return Err(CliError::Config("discount_r must be finite".into()));
        }
        if self.surface_stride == 0 || self.verify.stride == 0 {
            return Err(CliError::Config("strides must be at least 1".into()));
        }
        self.model()?;
        self.sim_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// The discounted prior.
    pub fn prior(&self) -> Result<Prior, CliError> {
        let prior = if self.discount_r == 0.0 { self.prior.clone() } else { self.prior.shift(self.discount_r)? };
        prior.validate()?;
        Ok(prior)
    }

    pub fn model(&self) -> Result<FilterModel, CliError> {
        self.model_with(self.prior()?, self.sigma)
    }

    pub fn model_with(&self, prior: Prior, sigma: f64) -> Result<FilterModel, CliError> {
        FilterModel::new(prior, sigma).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Default grid for `model` with the configured overrides applied.
    pub fn grid_for(&self, model: &FilterModel) -> Result<GridSpec, CliError> {
        self.grid_on(model, default_domain(model.prior()))
    }

    /// Like [`RunConfig::grid_for`] but with a given default domain.
    pub fn grid_on(&self, model: &FilterModel, domain: (f64, f64)) -> Result<GridSpec, CliError> {
        let base = GridSpec::default_for(model, self.horizon).map_err(|e| CliError::Config(e.to_string()))?;
        let g = &self.grid;
        let grid = GridSpec::new(
            self.horizon,
            g.n_t.unwrap_or(base.n_t),
            g.x_lo.unwrap_or(domain.0),
            g.x_hi.unwrap_or(domain.1),
            g.n_x.unwrap_or(base.n_x),
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        grid.validate_for(model).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(grid)
    }

    pub fn sim_config(&self) -> SimConfig {
        let d = SimConfig::default();
        let s = &self.sim;
        SimConfig {
            n_paths: s.n_paths.unwrap_or(d.n_paths),
            n_steps: s.n_steps.unwrap_or(d.n_steps),
            seed: s.seed.unwrap_or(d.seed),
            measure: s.measure.unwrap_or(d.measure),
        }
    }
}
