//! Numerical laboratory for controllability of parallel shear flows in a
//! periodic channel.
//!
//! - [`profile`]: step profiles and the conservation-exact moves (refine,
//!   transpose, elastic collision).
//! - [`planner`]: move sequences connecting profiles with equal momentum and
//!   energy.
//! - [`spectral`]: Fourier × sine pseudo-spectral solver for the forced 2-D
//!   Euler equations with diagnostics and weak-form residuals.
//! - [`control`]: forcing schedules, their L¹(L²) cost, and transfer checks.
//! - [`genflow`]: discrete generalized flows, action minimization, braid words.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod genflow;
pub mod planner;
pub mod profile;
pub mod spectral;

pub use profile::{Move, StepProfile};
