//! Bertrand-Nash equilibrium prices for multi-firm differentiated-product
//! markets under simulation-based Mixed Logit demand.
//!
//! Firms simultaneously set prices for their product portfolios; consumer
//! demand is a finite-sample Mixed Logit model (S consumer draws, each with
//! its own taste coefficients and an optional reservation price above which
//! purchase probability is zero). Equilibrium candidates are simultaneously
//! stationary prices: zeros of the combined gradient — the stack of every
//! firm's own-price profit derivatives.
//!
//! The crate implements and cross-validates five solution methods on one
//! shared numerical core:
//!
//! * **ζ-FPI** — fixed-point iteration `p ← c + ζ(p)` on the ζ markup map
//!   (no linear solves per step);
//! * **η-FPI** — fixed-point iteration `p ← c + η(p)` on the classic markup
//!   equation (provided to demonstrate its local non-convergence);
//! * **CG-NM / η-NM / ζ-NM** — a matrix-free inexact-Newton method
//!   (Householder GMRES with an SVD hookstep trust region) applied to the
//!   residuals `F_π = ∇̃π̂`, `F_η = p − c − η(p)`, `F_ζ = p − c − ζ(p)`,
//!   which share a zero set.
//!
//! Module map:
//!
//! * [`market_model`] — products, firms, ownership partition, costs;
//! * [`mixed_logit`] — utility models, consumer draws, per-sample Logit
//!   probabilities;
//! * [`demand_calculus`] — aggregate demand, first/second price derivatives,
//!   profits, combined gradient, per-firm Hessians;
//! * [`markup_maps`] — the η and ζ maps, the three residual systems and
//!   their Jacobians, the extended ζ map for finite reservation prices;
//! * [`newton_krylov`] — Householder GMRES, subspace hookstep, trust-region
//!   driver, directional finite differences, diagonal preconditioning;
//! * [`solvers`] — top-level methods, truncation of numerically dead
//!   products, termination, verification;
//! * [`pathology`] — a closed-form vector field whose Newton/line-search/
//!   hookstep behavior is known exactly, used as an engine oracle;
//! * [`model_zoo`] — canonical scenario builders and named presets.

#![warn(missing_docs)]

pub mod demand_calculus;
pub mod market_model;
pub mod markup_maps;
pub mod mixed_logit;
pub mod model_zoo;
pub mod newton_krylov;
pub mod pathology;
pub mod solvers;

/// Dense column vector of `f64` used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix of `f64` used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;

pub use market_model::{Market, PriceVector, Product};
pub use mixed_logit::{LinearUtility, LogIncomeUtility, LogitMatrix, SampleSet, UtilityModel};
pub use solvers::{Method, SolverRun, Status};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A domain type's invariants were violated at construction.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// A numerical operation could not be completed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Scenario or configuration files could not be read or parsed.
    #[error("configuration error: {0}")]
    Config(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
