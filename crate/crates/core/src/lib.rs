//! Mean curvature flow on strictly convex triangle meshes, Brownian motion in
//! the induced time-dependent metric, mirror coupling, and the backward
//! density equation with an `H²` potential.

pub mod brownian;
pub mod coupling;
pub mod density;
pub mod error;
pub mod geodesic;
pub mod harness;
pub mod geometry;
pub mod linalg;
pub mod flow;
pub mod mesh;
pub mod parallel;
pub mod sphere;
pub mod stats;

pub use error::{Error, Result};
