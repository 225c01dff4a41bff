//! Finite element solver for the diffuse-interface two-phase magnetohydrodynamic
//! model with variable (and strongly contrasting) densities.
//!
//! The crate is `no_std` and only needs `alloc`. It carries every numerical piece of
//! the solver: structured triangulations, P1 / MINI finite element spaces, sparse
//! storage plus a pivoting direct solver, the model coefficients and manufactured
//! solutions, the coupled semi-implicit time stepper with its Newton linearization,
//! and the energy / mass / error diagnostics used to audit it.
//!
//! Everything that touches files, configuration or the command line lives in the
//! companion `chmhd` crate.
//!
//! Field layout used throughout: `phi` is the phase field (-1 fluid I, +1 fluid II),
//! `omega` the chemical potential, `vel` the velocity (MINI element), `pres` the
//! zero-mean pressure and `mag` the magnetic field.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod fem;
pub mod mesh;
pub mod physics;
pub mod scheme;
pub mod sparse;

mod math;

pub use diagnostics::{DiagnosticsRecord, EnergyComponents, ErrorReport};
pub use fem::{FieldVec, QuadRule, Space, SpaceKind};
pub use mesh::{Mesh, MeshError, Rect, Side};
pub use physics::PhysParams;
pub use scheme::{BcSet, KrylovConfig, LinearSolver, SchemeError, SolverConfig, State, Stepper};
pub use sparse::{CompressedMatrix, SparseError, Triplets};
