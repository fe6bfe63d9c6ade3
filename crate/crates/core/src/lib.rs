//! Spectral Galerkin laboratory for the dynamic `Phi^{2n}_d` reaction-diffusion
//! model with spatially correlated noise.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: Dirichlet sine basis on a box, transforms and norms.
//! * [`nonlinearity`]: the polynomial drift, its truncation and the
//!   pseudo-spectral evaluator used by the integrators.
//! * [`noise`]: correlated Wiener increments, stochastic convolutions and the
//!   moment scaling experiments.
//! * [`dynamics`]: exponential integrators for the skeleton, stochastic and
//!   controlled equations.
//! * [`action`]: the rate functional, control cost, discrete adjoint and the
//!   instanton minimizer.
//! * [`lab`]: regime classification, rare-event Monte Carlo, configuration,
//!   file formats and the parallel runner.

pub mod action;
pub mod dynamics;
pub mod error;
pub mod lab;
pub mod noise;
pub mod nonlinearity;
pub mod spectral;

pub use action::{
    adjoint_gradient, control_cost, evaluate_action, minimize_action, ActionProblem,
    InstantonResult, MinimizerOptions, TargetNorm,
};
pub use dynamics::{
    convolution_map, solve_controlled, solve_skeleton, solve_stochastic, Control, SolveReport,
    TimeGrid, Trajectory,
};
pub use error::{Error, Result};
pub use lab::regime::{classify_regime, Regime, ScalingFamily};
pub use noise::rng::{RngStream, StreamId};
pub use noise::{lambda_k, NoiseModel, NoiseParams};
pub use nonlinearity::{DriftOperator, PolynomialDrift};
pub use spectral::{BasisSpec, GridField, SpectralBasis, SpectralField};
