//! Convex geometry of Finsler norms and a finite-difference tug-of-war
//! solver for Dirichlet problems of the Finsler infinity Laplacian.
//!
//! The crate is organized around the objects of the continuum theory:
//!
//! * [`norm`] — Finsler norms, duals, and subdifferential faces;
//! * [`regularize`] — the C^{1,1} Minkowski-sum regularization `phi_zeta`;
//! * [`operators`] — the envelopes `G*`, `G_*` and their shifted variants;
//! * [`cones`] — conical test functions, mollified graphs, touching checks;
//! * [`grid`] — the lattice scheme `M^phi_eps` and the Dirichlet solver;
//! * [`verify`] — comparison with cones, Lipschitz/AMLE checks, barriers,
//!   and the infinity-eigenvalue estimate;
//! * [`game`] — Monte Carlo simulation of the tug-of-war game.

pub mod cones;
pub mod error;
pub mod game;
pub mod geom;
pub mod grid;
pub mod norm;
pub mod operators;
pub mod regularize;
pub mod verify;

pub use error::{Error, Result};
