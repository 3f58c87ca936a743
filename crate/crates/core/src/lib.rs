//! Perspective-warped neural radiance fields at CPU desk scale: octree space
//! subdivision driven by camera frustums, per-leaf PCA warps, a multi-hash
//! feature grid, warp-adaptive ray marching, and an analytic sphere-scene
//! oracle for end-to-end verification.

pub mod checkpoint;
pub mod error;
pub mod field;
pub mod geometry;
pub mod image_buf;
pub mod linalg;
pub mod model;
pub mod renderer;
pub mod sampling;
pub mod scenes;
pub mod subdivision;
pub mod warp;

pub use error::{Error, Result};
