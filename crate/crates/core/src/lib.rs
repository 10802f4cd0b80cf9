//! Simulation, estimation, and deviation-rate analysis for bivariate
//! jump-diffusions.
//!
//! The crate is organised around one pipeline:
//!
//! 1. [`model`] — piecewise-constant specification of the process
//!    `dX_l = b_l dt + sigma_l dW_l + dJ_l` (`l = 1, 2`, correlated Brownian
//!    legs, compound Poisson jumps) and exact coefficient integrals.
//! 2. [`simulate`] — exact-in-distribution path sampling on a uniform grid
//!    with reproducible seeding.
//! 3. [`estimate`] — realized and threshold (truncated) estimators of the
//!    integrated (co-)volatility vector.
//! 4. [`rates`] — large- and moderate-deviation rate functions for those
//!    estimators, in closed form and by numerical convex duality.
//! 5. [`regimes`] — admissibility checks for power-law threshold and scaling
//!    sequences.
//! 6. [`experiments`] — Monte Carlo verification harness with exact
//!    chi-square tail oracles and Wilson confidence intervals.

pub mod estimate;
pub mod experiments;
pub mod model;
pub mod rates;
pub mod regimes;
pub mod simulate;

pub use estimate::ThresholdFn;
pub use model::{
    CoefficientFunction, IntegrandKind, JumpCoupling, JumpSpec, ModelError, ModelSpec, SizeLaw,
    VolVector,
};
pub use rates::{ExtReal, LambdaVec, RateContext, RateError};
pub use simulate::{derive_subseed, simulate_path, JumpTruth, SampledPath};
