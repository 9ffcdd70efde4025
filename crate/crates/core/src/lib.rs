//! Simulation library for the restricted (n+1)-body problem on surfaces
//! of constant curvature (S^2 and H^2).
//!
//! The n unit-mass primaries form a regular polygon relative equilibrium
//! rotating about the z-axis; the massless particle moves in the
//! co-rotating frame, expressed in stereographic canonical coordinates.
//! Binary collisions between the particle and a primary are removed
//! either locally (a Levi-Civita-type quadratic chart around one
//! primary) or globally (a Birkhoff-type rational chart fixing all
//! primaries), with the usual zero-energy shifted Hamiltonian and
//! fictitious-time reparametrization.

pub mod checks;
pub mod cli;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod geometry;
pub mod integrate;
pub mod regularization;
mod roots;

pub use error::{Error, Result};
