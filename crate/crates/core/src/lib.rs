//! Time discretisation of semilinear parabolic stochastic evolution equations
//!
//! ```text
//! dU = AU dt + F(t, U) dt + G(t, U) dW_H,   U(0) = x0
//! ```
//!
//! on finite-dimensional surrogates of the state space. The crate provides the
//! implicit-linear Euler scheme, the abstract scheme built from a family of
//! measures (the Hille-Phillips approximants `E(t_j)`), the modified and
//! classical splitting schemes, a fine-grid exponential Euler reference, and the
//! machinery for measuring strong errors in discrete Hölder norms across a
//! ladder of step counts.
//!
//! Module map:
//!
//! * [`grid`]: time grids, discrete Hölder norms, moments and rate fits
//! * [`linop`]: generator surrogates, resolvents, semigroups, fractional powers
//! * [`noise`]: counter-based Brownian increment lattices
//! * [`calculus`]: measure families, convolution moments and `E(t_j)`
//! * [`schemes`]: the time-stepping engines
//! * [`heat1d`]: the 1D stochastic heat equation assembly and presets
//! * [`exprparse`]: coefficient expression language
//! * [`runner`]: experiments, reports and the verification suite

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::inconsistent_digit_grouping)]

pub mod calculus;
pub mod error;
pub mod exprparse;
pub mod grid;
pub mod heat1d;
pub mod linop;
pub mod noise;
pub mod runner;
pub mod schemes;

pub use calculus::{ApproximantOperator, MeasureFamily};
pub use error::{Error, Result};
pub use grid::{GridSequence, RateFit, StateNorm, TimeGrid};
pub use heat1d::{HeatSpec, NoiseKind};
pub use linop::{LinearOperator, SpectralData};
pub use noise::{NoiseLattice, SeedDescriptor};
pub use runner::{ErrorReport, ExperimentConfig};
pub use schemes::{Problem, SchemeKind, Trajectory};
