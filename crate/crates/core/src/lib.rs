//! Entropically regularized optimal transport divergences between discrete
//! probability measures on a fixed finite space, together with the
//! statistical machinery to compare sampled distributions: Gaussian limit
//! laws for the empirical divergence, bootstrap calibration of one- and
//! two-sample test statistics, Monte-Carlo power estimation, and kernel
//! density summaries for reporting.
//!
//! The solver works in the log domain throughout, so small regularization
//! values that underflow the kernel `exp(-C/λ)` entrywise remain usable.

#![forbid(unsafe_code)]

pub mod asymptotics;
pub mod error;
pub mod inference;
pub mod measures;
mod rng;
pub mod sinkhorn;

pub use asymptotics::{
    asymptotic_law, directional_derivative, multinomial_covariance, rho, sample_limit,
    AsymptoticLaw, LawKind, MultinomialCovariance,
};
pub use error::{Error, Result};
pub use inference::{
    bootstrap_test_one, bootstrap_test_two, kde, one_sample_statistic, p_value_two_sided,
    power_curve, silverman_bandwidth, two_sample_statistic, PowerConfig, PowerPoint, TestConfig,
    TestReport,
};
pub use measures::{
    bootstrap_resample, euclidean_barycenter, linear_trend_measure, make_grid, sample_empirical,
    squared_euclidean_cost, uniform_measure, CostMatrix, DiscreteMeasure, EmpiricalMeasure,
    FiniteSpace,
};
pub use sinkhorn::{
    eval_dual_objective, kernel_matrix, sinkhorn_divergence, sinkhorn_loss, sinkhorn_solve,
    sinkhorn_solve_warm, SinkhornSolution, SolverConfig,
};
