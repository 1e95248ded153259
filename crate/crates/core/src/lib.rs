//! First-order virtual element method for 2D linear elasticity on
//! arbitrary polygonal meshes, with patch-based adaptive mesh coarsening.

pub mod benchmark;
pub mod coarsening;
pub mod error;
pub mod indicators;
pub mod mesh;
pub mod meshgen;
pub mod parallel;
pub mod reference;
pub mod sparse;
pub mod vem;

pub use error::{Error, Result};
pub use parallel::Execution;
