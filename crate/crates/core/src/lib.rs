//! Numerical laboratory for sublinear expectations under mean- and
//! variance-uncertainty.
//!
//! The crate is organised bottom-up:
//!
//! - [`measures`]: finitely supported laws, their convex hulls and mean bounds.
//! - [`variance`]: exact upper/lower variance envelopes and variance matching.
//! - [`function`]: piecewise test functions and their text grammar.
//! - [`dynamics`]: worst-case kernel dynamic programming on a state grid.
//! - [`gheat`]: monotone explicit solver for the G-heat equation and the
//!   closed-form G-normal distribution function.
//! - [`experiments`]: limit-theorem convergence experiments built on the above.
//! - [`bandit`]: two-armed bandit under ambiguity.
//!
//! All numerical kernels are deterministic: reductions use pairwise
//! summation in a fixed order and Monte Carlo paths draw from per-path
//! ChaCha substreams, so results do not depend on the rayon pool size.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod dynamics;
pub mod experiments;
pub mod function;
pub mod gheat;
pub mod grid;
pub mod measures;
pub mod sum;
pub mod variance;

mod error;

pub use error::Error;
pub use function::PiecewiseFunction;
pub use measures::{AmbiguitySet, DiscreteMeasure, MeanBounds, SimplexWeight};
pub use variance::VarianceEnvelope;
