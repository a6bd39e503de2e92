//! Pixel-aligned 3D generation geometry toolkit.
//!
//! The crate lifts multi-scale 2D image features into a voxel cube placed
//! inside the camera frustum, fuses feature volumes across calibrated
//! views, carves visual hulls as a non-learned generator stand-in, and
//! provides the SDF / marching-cubes machinery, fidelity metrics and
//! scene-level least-squares alignment around that core.
//!
//! Conventions (shared by every module): camera at the origin with +z
//! forward, +x right, +y down; pixel index i spans [i, i+1) with center
//! i + 0.5; poses are world-from-camera.

pub mod camera;
pub mod error;
pub mod eval;
pub mod hullgen;
pub mod lift;
pub mod obj;
pub mod placement;
pub mod pxt;
pub mod rng;
pub mod scene;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
