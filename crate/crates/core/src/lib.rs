//! Variational implicit-explicit integrators for Hamiltonians with a
//! stiff quadratic fast part, plus the diagnostics used to study them.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod harness;
pub mod integrators;
pub mod lagrangian;
pub mod linalg;
pub mod system;

pub use error::{Error, Result};
pub use integrators::{integrate, Method, Status, Stepper, StepperSpec, Trajectory};
pub use system::{FpuParams, OscillatorySystem, State};
