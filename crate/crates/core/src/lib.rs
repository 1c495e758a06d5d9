//! Hierarchical B-spline spaces on admissible meshes, Poisson assembly and BPX-preconditioned
//! conjugate gradients.

pub mod adaptivity;
pub mod bench;
pub mod bpx;
pub mod bspline;
pub mod error;
pub mod galerkin;
pub mod geometry;
pub mod grid;
pub mod krylov;
pub mod mesh;
pub mod sparse;
pub mod space;

pub use error::{Error, Result};
