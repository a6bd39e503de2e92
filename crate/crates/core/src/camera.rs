//! Pinhole camera model and coordinate conventions.
//!
//! Conventions used throughout the crate:
//! - camera frame: camera at the origin, +z forward, +x right, +y down
//!   (matching image row order);
//! - continuous pixel coordinates: pixel index `i` covers the interval
//!   `[i, i+1)` with its center at `i + 0.5`;
//! - poses are stored world-from-camera (they map camera-frame points into
//!   the world frame).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Depth below which a point counts as behind the camera for sampling and
/// rasterization purposes.
pub const Z_NEAR: f64 = 1e-6;

const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.fx, self.fy, self.cx, self.cy];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite field".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::InvalidIntrinsics(format!(
                "image size must be at least 1x1 (got {}x{})",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// World-from-camera rigid transform: `p_world = rotation * p_camera + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Validates that `rotation` is orthonormal with determinant +1 within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        let det_dev = (rotation.determinant() - 1.0).abs();
        let worst = dev.max(det_dev);
        if !worst.is_finite() || worst > ROTATION_TOLERANCE {
            return Err(Error::InvalidRotation(worst));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRotation(f64::INFINITY));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// Composition: `(a ∘ b).transform_point(p) == a.transform_point(b.transform_point(p))`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Row-major 4x4 homogeneous matrix, bottom row (0, 0, 0, 1).
    pub fn to_matrix4_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn from_matrix4_row_major(m: &[f64; 16]) -> Result<Self> {
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(Error::InvalidIntrinsics(
                "world_from_camera bottom row must be 0 0 0 1".into(),
            ));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        Pose::new(rotation, translation)
    }
}

/// Half-line in the camera frame; `direction` is unit length within 1e-12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

/// Projects a camera-frame point to continuous pixel coordinates.
///
/// Returns `(u, v, z)` with `u = fx*x/z + cx`, `v = fy*y/z + cy` and `z`
/// passed through unchanged.
pub fn project(point: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<(f64, f64, f64)> {
    if point.z <= 0.0 {
        return Err(Error::BehindCamera { z: point.z });
    }
    let u = intr.fx * point.x / point.z + intr.cx;
    let v = intr.fy * point.y / point.z + intr.cy;
    Ok((u, v, point.z))
}

/// Back-projects a continuous pixel coordinate to a unit ray through the
/// camera origin: direction ∝ ((u-cx)/fx, (v-cy)/fy, 1).
pub fn unproject(u: f64, v: f64, intr: &CameraIntrinsics) -> Ray {
    let dir = Vector3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
    Ray { origin: Vector3::zeros(), direction: dir.normalize() }
}

/// Intrinsics for a square-pixel camera whose full horizontal and vertical
/// field of view is `fov_deg`. Requires a square image.
pub fn fov_to_intrinsics(fov_deg: f64, width: u32, height: u32) -> Result<CameraIntrinsics> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(Error::FovOutOfRange(fov_deg));
    }
    if width != height {
        return Err(Error::NonSquareImage { width, height });
    }
    let half = (fov_deg.to_radians() / 2.0).tan();
    let fx = (width as f64 / 2.0) / half;
    CameraIntrinsics::new(fx, fx, width as f64 / 2.0, height as f64 / 2.0, width, height)
}

/// On-disk camera description (JSON). `world_from_camera` is a 4x4 row-major
/// homogeneous matrix; omitted means identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraDescriptor {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub world_from_camera: Option<Vec<f64>>,
}

impl CameraDescriptor {
    pub fn new(intr: &CameraIntrinsics, pose: Option<&Pose>) -> Self {
        Self {
            fx: intr.fx,
            fy: intr.fy,
            cx: intr.cx,
            cy: intr.cy,
            width: intr.width,
            height: intr.height,
            world_from_camera: pose.map(|p| p.to_matrix4_row_major().to_vec()),
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    pub fn pose(&self) -> Result<Pose> {
        match &self.world_from_camera {
            None => Ok(Pose::identity()),
            Some(values) => {
                let arr: [f64; 16] = values.as_slice().try_into().map_err(|_| {
                    Error::InvalidIntrinsics(format!(
                        "world_from_camera must have 16 entries, got {}",
                        values.len()
                    ))
                })?;
                Pose::from_matrix4_row_major(&arr)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
