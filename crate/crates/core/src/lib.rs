//! Numerical laboratory for the viscous Hamilton–Jacobi equation
//! `u_t - Δu = a|∇u|^p` with homogeneous Neumann conditions on intervals and
//! rectangles.

pub mod error;
pub mod estimates;
pub mod grid;
pub mod hamiltonian;
pub mod semigroup;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Domain, Field};
pub use hamiltonian::HamiltonianSpec;
pub use semigroup::SpectralPlan;
