//! Multisymplectic (De Donder–Weyl) formulation of first-order field theory in
//! local coordinates.

pub mod algebra;
pub mod dedonder_weyl;
pub mod error;
pub mod expr;
pub mod field_solver;
pub mod hamilton_jacobi;
pub mod phase_space;
pub mod scenario;
pub mod theory;

pub use error::{Error, Result};
