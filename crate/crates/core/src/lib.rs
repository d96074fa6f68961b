//! Large deviations toolkit for Wishart processes.
//!
//! The crate simulates the matrix SDE
//! `dX = ε(√X dB + dBᵀ√X) + δ I dt` together with its trace and eigenvalue
//! projections, evaluates the associated rate functionals on discretized
//! paths, and solves the backward Riccati equation behind the Laplace
//! functional. [`harness`] drives the statistical experiments that tie these
//! pieces together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod harness;
pub mod matrix;
pub mod path;
pub mod rate;
pub mod riccati;
pub mod simulator;

pub use error::{Error, Result};
pub use matrix::{
    classify_spd, classify_spd_relative, norms, solve_sylvester, sqrt_spd, Norms, SpdClass,
    SpdCone, SymMatrix, Tolerance,
};
pub use path::{diagonal_path, ScalarPath, SpdPath};
pub use rate::{
    class_f_diagnostic, compute_k_path, dual_phi, optimal_endpoint_path, rate_i, rate_i_max,
    rate_j, rate_k, rate_k_max, scalar_rate, underline_f, ClassF, ClassFReport, RateReport,
    RateValue,
};
pub use riccati::{
    laplace_transform, legendre_k, solve_riccati, Atom, Density, MatrixMeasure, RiccatiSolution,
};
pub use simulator::{Scheme, SimConfig};
