//! Tetrad prescriptions, Dirac gamma-matrix fields and discrete Dirac
//! operators on curved spacetimes.
//!
//! The crate is organised bottom-up:
//!
//! * [`exprlang`]: closed-form scalar expressions of the coordinates.
//! * [`metric`]: metric fields, admissibility, Christoffel symbols, spatial
//!   coordinate changes and their Cauchy-Green classification.
//! * [`lorentz`]: the η-Cholesky factorization and Lorentz-group numerics.
//! * [`clifford`]: flat and curved gamma matrices, hermitizer, spin lift.
//! * [`tetrad`]: tetrad prescriptions and inter-chart Lorentz transforms.
//! * [`dirac`]: discrete Hamiltonian and energy operators, gauge conditions,
//!   stress tensor and gauge experiments.

pub mod clifford;
pub mod dirac;
pub mod exprlang;
pub mod linalg;
pub mod lorentz;
pub mod metric;
pub mod tetrad;

pub use exprlang::{Expr, Params};
pub use linalg::{CMat4, Point4, C64};
