//! Numerical laboratory for the nonlocal heat equation
//!
//! ```text
//!     du/dt (t, x) = integral J(x, y) [u(t, y) - u(t, x)] dy
//! ```
//!
//! with bounded, integrable jump kernels `J`. The crate builds cell-centered
//! grids, samples kernel families with either compact support or heavy
//! polynomial tails, applies the nonlocal operator with dense, on-the-fly or
//! FFT storage strategies, integrates the semi-discrete system in time, and
//! measures the quantities that control the long-time behaviour: Lq norms,
//! nonlocal energies, fractional seminorms and fitted decay exponents.
//!
//! The headline phenomenon: kernels with a `|x - y|^-(n + 2 sigma)` tail relax
//! initial data at the fractional rate `t^(-n/(2 sigma) (1 - 1/q))`, strictly
//! faster than the `t^(-n/2 (1 - 1/q))` rate of compactly supported kernels.
//! Everything here exists to make that contrast, and the inequality chain
//! behind it, observable on a lattice.

// Dimension loops index several fixed-size arrays at once, and comparisons
// are negated where a NaN must fail the test; both read worse when forced
// through iterators or partial_cmp.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod decay;
pub mod error;
pub mod experiment;
pub mod functionals;
pub mod grid;
pub mod integrator;
pub mod kernel;
pub mod operator;
pub mod verify;

pub use config::{parse_config, ExperimentConfig};
pub use decay::{DecayFit, DecaySeries, SymbolFit};
pub use error::{Error, Result};
pub use grid::{Field, Grid, TestFieldProfile};
pub use integrator::{Scheme, TimeSchedule, Trajectory};
pub use kernel::{KernelFamily, KernelReport, KernelSpec};
pub use operator::{BoundaryMode, OperatorApplier, Strategy};
