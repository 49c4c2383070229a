//! Implicit nonlinear-semigroup solvers for degenerate-singular porous-medium
//! reaction-diffusion problems `∂ₜu = Δφ(u) + f(u)`, plus the kinetic and
//! fractional-regularity measurements used to check them.
//!
//! The crate is `no_std` and only needs `alloc`. Configuration and the CLI
//! live in the `porodyn` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod evolution;
pub mod fft;
pub mod grid;
pub mod kinetic;
pub mod phi;
pub mod quad;
pub mod regularity;
pub mod resolvent;

pub use error::{Error, Result};
pub use evolution::{Reaction, SolverOptions, SourceSpec, Trajectory};
pub use grid::{BoundaryCondition, Field, Grid};
pub use phi::{Interval, PhiKind, PhiModel, SmoothApproxParams};
pub use resolvent::{ResolventProblem, SolveStats};
