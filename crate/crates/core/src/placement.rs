//! Placement of the generation cube inside the camera frustum.
//!
//! The cube is axis-aligned in the camera frame, centered on the optical
//! axis at depth `d`, with edge length `s` and `resolution` voxels per axis.
//! Auto-placement chooses `d` so that the rays through the four image
//! corners pass exactly through the four vertices of the cube's back face,
//! which keeps the whole frustum cross-section up to the back face inside
//! the cube.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::{unproject, CameraIntrinsics};
use crate::error::{Error, Result};

/// Default inference field of view in degrees when none is supplied.
pub const DEFAULT_FOV_DEG: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubePlacement {
    /// Distance from the camera plane to the cube center along +z, world units.
    pub d: f64,
    /// Cube edge length, world units.
    pub s: f64,
    /// Voxels per axis.
    pub resolution: u32,
}

impl CubePlacement {
    pub fn new(d: f64, s: f64, resolution: u32) -> Result<Self> {
        if !(s > 0.0) || !d.is_finite() {
            return Err(Error::InvalidPlacement(format!("need finite d and s > 0 (d={d}, s={s})")));
        }
        if resolution < 1 {
            return Err(Error::InvalidPlacement("resolution must be at least 1".into()));
        }
        if !(d + s / 2.0 > 0.0) {
            return Err(Error::InvalidPlacement(format!(
                "back face must be in front of the camera (d + s/2 = {})",
                d + s / 2.0
            )));
        }
        Ok(Self { d, s, resolution })
    }

    /// Voxel pitch `s / resolution`.
    pub fn pitch(&self) -> f64 {
        self.s / self.resolution as f64
    }

    pub fn voxel_count(&self) -> usize {
        let r = self.resolution as usize;
        r * r * r
    }

    /// Center of voxel (i, j, k) in the camera frame; i runs along +x,
    /// j along +y, k along +z.
    pub fn voxel_center(&self, i: u32, j: u32, k: u32) -> Result<Vector3<f64>> {
        let r = self.resolution;
        if i >= r || j >= r || k >= r {
            return Err(Error::VoxelOutOfRange {
                i: i as i64,
                j: j as i64,
                k: k as i64,
                resolution: r,
            });
        }
        Ok(self.voxel_center_unchecked(i, j, k))
    }

    /// As `voxel_center` but without the range check; callers iterate valid
    /// index ranges.
    #[inline]
    pub fn voxel_center_unchecked(&self, i: u32, j: u32, k: u32) -> Vector3<f64> {
        let r = self.resolution as f64;
        let coord = |idx: u32| ((idx as f64 + 0.5) / r - 0.5) * self.s;
        Vector3::new(coord(i), coord(j), coord(k) + self.d)
    }

    /// Linear index with c-order layout (i slowest, k fastest).
    #[inline]
    pub fn linear_index(&self, i: u32, j: u32, k: u32) -> usize {
        let r = self.resolution as usize;
        (i as usize * r + j as usize) * r + k as usize
    }
}

/// On-disk form of a placement (the grid sidecar JSON).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub d: f64,
    pub s: f64,
    pub resolution: u32,
}

impl From<CubePlacement> for PlacementRecord {
    fn from(p: CubePlacement) -> Self {
        Self { d: p.d, s: p.s, resolution: p.resolution }
    }
}

impl TryFrom<PlacementRecord> for CubePlacement {
    type Error = Error;

    fn try_from(r: PlacementRecord) -> Result<Self> {
        CubePlacement::new(r.d, r.s, r.resolution)
    }
}

/// Auto-placement: choose `d` so the corner rays of a square camera with the
/// given field of view pass through the back-face vertices (±s/2, ±s/2, d + s/2).
///
/// Solving tan(fov/2) * (d + s/2) = s/2 gives d = (s/2) * (1/tan(fov/2) - 1).
pub fn auto_place(fov_deg: f64, s: f64, resolution: u32) -> Result<CubePlacement> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(Error::FovOutOfRange(fov_deg));
    }
    let half = (fov_deg.to_radians() / 2.0).tan();
    let d = (s / 2.0) * (1.0 / half - 1.0);
    CubePlacement::new(d, s, resolution)
}

/// Diagnostic enumeration of the voxels a pixel ray traverses inside the
/// cube: clip the ray against the cube, then step along it at half-voxel
/// increments, collecting hit voxel indices front to back without
/// duplicates. Empty when the ray misses the cube.
pub fn pixel_voxel_correspondence(
    u: f64,
    v: f64,
    placement: &CubePlacement,
    intr: &CameraIntrinsics,
) -> Vec<[u32; 3]> {
    let ray = unproject(u, v, intr);
    let dir = ray.direction;
    let half = placement.s / 2.0;
    let lo = [-half, -half, placement.d - half];
    let hi = [half, half, placement.d + half];

    // Slab clipping; origin is the camera center (0, 0, 0).
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let o = ray.origin[axis];
        let d = dir[axis];
        if d.abs() < 1e-300 {
            if o < lo[axis] || o > hi[axis] {
                return Vec::new();
            }
        } else {
            let mut ta = (lo[axis] - o) / d;
            let mut tb = (hi[axis] - o) / d;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
    }
    if t0 >= t1 {
        return Vec::new();
    }

    let r = placement.resolution;
    let step = placement.pitch() / 2.0;
    let mut out: Vec<[u32; 3]> = Vec::new();
    let mut t = t0 + step / 2.0;
    while t < t1 {
        let p = ray.origin + dir * t;
        let idx_of = |coord: f64, lo: f64| -> Option<u32> {
            let x = ((coord - lo) / placement.s * r as f64).floor();
            if x >= 0.0 && x < r as f64 {
                Some(x as u32)
            } else {
                None
            }
        };
        if let (Some(i), Some(j), Some(k)) = (idx_of(p.x, lo[0]), idx_of(p.y, lo[1]), idx_of(p.z, lo[2])) {
            let cell = [i, j, k];
            if out.last() != Some(&cell) {
                out.push(cell);
            }
        }
        t += step;
    }
    out
}
