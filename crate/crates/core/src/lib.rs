//! Multiple kernel learning with mixed-norm (ψ-norm) regularization.
//!
//! The crate has two halves:
//!
//! - an estimator for squared-loss MKL penalized by `λ‖(‖f_m‖_{H_m})_m‖_ψ²`,
//!   where `ψ` is an ℓp norm, an elastic-net mixture of ℓ1 and ℓ2, or a
//!   block (p,q) mixed norm ([`solver`]);
//! - evaluators for the corresponding learning-rate bounds, including the
//!   radius-minimized leading term, the homogeneous closed forms, the
//!   minimax lower bound and the ℓ1 vs ℓ∞ comparison under inhomogeneous
//!   complexities ([`bounds`]).
//!
//! Supporting modules build Gaussian kernel banks ([`kernels`]), evaluate
//! norms and their duals ([`norms`]), run a seeded differential-evolution
//! minimizer ([`de`]) and drive the synthetic experiments ([`experiments`]).
//!
//! All bound values are reported with the unspecified absolute constants
//! set to 1, so only comparisons between norms, exponents and sample sizes
//! are meaningful.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod de;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod linalg;
pub mod norms;
pub mod solver;

pub use error::{MklError, Result};
pub use kernels::{Dataset, GramBank, KappaEstimate, KernelSpec};
pub use nalgebra;
pub use norms::{NormReport, NormSpec};
pub use solver::{Backend, MklModel, MklProblem, SolverOptions};
