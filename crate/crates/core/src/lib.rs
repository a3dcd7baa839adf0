//! Finite element machinery for the linear-quadratic elliptic Neumann boundary
//! control problem with pointwise control constraints
//!
//! ```text
//!   minimize   ½‖y − y_d‖²_{L2(Ω)} + ½γ‖u‖²_{L2(Γ)}
//!   subject to a(y, z) = (f, z)_Ω + (u, z)_Γ  for all z,   φ1 ≤ u ≤ φ2 on Γ,
//! ```
//!
//! with `a(y, z) = ∫ A∇y·∇z + κ y z`.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! core: meshes ([`mesh`]), sparse and dense linear algebra ([`linalg`]), P1
//! assembly and projections ([`fem`]), the reduced optimal control problem and
//! its primal-dual active set solver ([`ocp`]), the localized orthogonal
//! decomposition spaces with the Neumann boundary correction ([`multiscale`])
//! and independent oracles used to verify all of the above
//! ([`verification`]). File formats and the command line live in the
//! `neumann-ocp` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod multiscale;
pub mod ocp;
pub mod space;
pub mod verification;

pub use error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];
