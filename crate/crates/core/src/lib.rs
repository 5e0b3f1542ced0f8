//! Quasi-invariance of subordinate Brownian motion under shifts `h∘S`:
//! Bernstein functions and subordinator indices, weighted Cameron–Martin
//! spaces, exact joint path sampling with the Radon–Nikodym density,
//! gradients and Dirichlet energies on path space, and a Monte Carlo
//! harness that checks the resulting identities.

pub mod bernstein;
pub mod error;
pub mod harness;
pub mod malliavin;
pub mod pathsim;
pub mod quad;
pub mod series;
pub mod shiftspace;
pub mod stats;
pub mod subordinator;

pub use error::{Error, Result};
