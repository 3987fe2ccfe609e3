//! Mean-field limit of the network: the single-particle chain, its
//! stationary law, the self-consistent rate profile and the equilibria it
//! induces, plus the finite-cycle counterpart.

mod absorption;
mod chain;
mod circle;
mod rates;
mod residual;
mod tau;

use thiserror::Error;

pub use absorption::{
    absorb_once, absorption_time_closed_form, absorption_times, expected_visits, monte_carlo_absorption,
    AbsorptionModel, AbsorptionSample,
};
pub use chain::{build_chain, p2, stationary_q, SingleParticleChain, StationaryLaw, MAX_POWER_ITERATIONS};
pub use circle::{
    absorption_compare, circle_chain_matrix, circle_expected_visits, finite_circle_lambda,
    monte_carlo_circle_absorption, wrap_offset, CircleLineComparison, CircleRates,
};
pub use rates::{
    curve_maximum, find_eta_roots, lambda_at, lambda_of_eta, nu_quadratic_roots, rates_from_eta,
    uniform_eta_grid, EtaRoots, NuQuadraticRoots, RateProfile, DOUBLING_TOL, STATIONARY_TOL,
};
pub use residual::{
    fixed_point_residual, geometric_test, FixedPointReport, HeadTypeCheck, ResidualOptions, StateResidual,
};
pub use tau::{
    sample_tau, tau_decay_ratio, tau_distribution, tau_pmf_closed_form, TypeOffsetDistribution,
};

/// Tail mass allowed outside the truncation window.
pub const EPS_TRUNC: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlmpError {
    #[error("gamma must be positive and finite (got {0})")]
    InvalidGamma(f64),
    #[error("eta must lie in (0, 1) (got {0})")]
    InvalidEta(f64),
    #[error("beta must be >= 0 and finite (got {0})")]
    InvalidBeta(f64),
    #[error("lambda must be positive (got {0})")]
    InvalidLambda(f64),
    #[error("truncation M = {m} too small (need at least {min})")]
    TruncationTooSmall { m: usize, min: usize },
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("cycle size must be odd and at least {min} (got {k})")]
    InvalidCycle { k: usize, min: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub(crate) fn check_beta(beta: f64) -> Result<(), NlmpError> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(NlmpError::InvalidBeta(beta))
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<(), NlmpError> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(NlmpError::InvalidGamma(gamma))
    }
}
