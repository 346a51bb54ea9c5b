//! Optimal liquidation of an asset whose drift is unknown and learned from
//! the price path.
//!
//! The drift `X` has a prior distribution ([`Prior`]); the seller observes
//! `S_t` only. After a change of measure, selling optimally reduces to
//! stopping the posterior mean `X̂_t` with running reward `exp(∫ X̂ ds)`.
//! The crate provides:
//!
//! * [`filter`]: the posterior mean, its inverse and the dispersion `ψ`,
//! * [`pde`]: a Bermudan finite-difference solver for the value function
//!   and the stopping boundary,
//! * [`integral`]: the integral equation characterizing the boundary, as
//!   a residual check and as an independent boundary solver,
//! * [`sim`]: Monte Carlo evaluation of stopping rules under both measures.

pub mod filter;
pub mod integral;
pub mod io;
pub mod pde;
pub mod prior;
pub mod quadrature;
pub mod sim;

pub use filter::{moment_inequality_value, DispersionEvaluator, FilterError, FilterModel};
pub use integral::{GaussianLawQ, IntegralError, ResidualReport};
pub use pde::{Boundary, GridSpec, SolverError, ValueSurface};
pub use prior::{Prior, PriorError};
pub use sim::{Estimate, Measure, SimConfig, SimError, StoppingRule};

use thiserror::Error;

/// Union of the module errors, for callers that drive several stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Integral(#[from] IntegralError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
