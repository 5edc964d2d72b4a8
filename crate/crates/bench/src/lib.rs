//! Shared fixtures for the kernel benchmarks.

use spde_core::heat1d::preset;
use spde_core::noise::{generate, Increments};
use spde_core::{Problem, SeedDescriptor};

/// The white-noise preset on `m` interior nodes over `[0, 1]`.
pub fn white_problem(m: usize) -> Problem {
    preset("white_mult", m)
        .and_then(|s| s.assemble(1.0))
        .expect("preset assembles")
}

/// One sample of increments for `steps` steps and `cols` columns.
pub fn increments(steps: usize, cols: usize) -> Increments {
    generate(steps, cols, 1.0, SeedDescriptor::new(1, 0))
        .expect("valid lattice")
        .into()
}
