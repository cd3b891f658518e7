//! Square-function estimates on discretized Ahlfors-David regular sets.
//!
//! Point clouds stand in for ADR sets; Christ-type dyadic cubes, Whitney
//! covers of the complement and Carleson tents are built on top of them, and
//! integral operators with `(C_theta, alpha, upsilon)` kernels are evaluated by
//! quadrature to measure square-function constants.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dyadic;
pub mod error;
pub mod estimates;
pub mod geom;
pub mod io;
pub mod kernels;
pub mod operators;
pub mod qm;
pub mod spatial;

pub use error::{Error, Result};
pub use kernels::{gradient_kernel, riesz_kernel, verify_kernel_axioms, HomogeneousKernel, KernelSpec};
pub use qm::{alpha_rho, check_adr, delta_e, diam, regularized_metric, AdrReport, AdrSet, QuasiMetricSpace};
