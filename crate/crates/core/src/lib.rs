//! Simulation and verification of weighted-volume-preserving curvature flow
//! for radial graphs over the sphere in rotationally symmetric warped products.

pub mod cheb;
pub mod cli;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod graphgeom;
pub mod grid;
pub mod initial;
pub mod monitors;
pub mod tensor;
pub mod warp;

pub use error::{Error, Result};
