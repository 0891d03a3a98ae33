//! Effective two-dimensional models of nematic elastomer bilayer plates.
//!
//! The crate evaluates and minimises the limit plate energies (relaxed
//! nematic foundation, electrostatically actuated foundation with a reduced
//! dielectric), solves the reduced Gauss law, builds laminate
//! microstructures and checks the three-dimensional energies along explicit
//! recovery sequences at desk scale.

pub mod cli;
pub mod dielectric;
pub mod energy2d;
pub mod error;
pub mod foundation;
pub mod gauss2d;
pub mod grid;
pub mod limit3d;
pub mod linalg;
pub mod microlam;
pub mod qtensor;
pub mod solver;

pub use error::{Error, Result};
