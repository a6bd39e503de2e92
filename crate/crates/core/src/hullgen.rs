//! Non-learned pixel-aligned generator stand-in: multi-view silhouette
//! carving inside the placed cube, SDF conversion, optional smoothing and
//! surface extraction.

use rayon::prelude::*;

use crate::camera::{project, CameraIntrinsics, Pose, Z_NEAR};
use crate::error::{Error, Result};
use crate::placement::CubePlacement;
use crate::volume::{marching_cubes, sdf_from_occupancy, OccupancyGrid, SdfGrid, TriMesh};

/// Binary silhouette of the object in one calibrated view.
#[derive(Debug, Clone)]
pub struct MaskView {
    pub mask: Vec<bool>,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl MaskView {
    pub fn new(mask: Vec<bool>, intrinsics: CameraIntrinsics, pose: Pose) -> Result<Self> {
        intrinsics.validate()?;
        let expect = intrinsics.width as usize * intrinsics.height as usize;
        if mask.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} pixels, intrinsics imply {}",
                mask.len(),
                expect
            )));
        }
        Ok(Self { mask, intrinsics, pose })
    }
}

/// Carves the silhouette hull: a voxel is occupied when it projects
/// validly into at least one view and the nearest mask pixel is true in
/// every view that sees it. Voxels visible nowhere stay empty.
pub fn carve(
    views: &[MaskView],
    reference: usize,
    placement: &CubePlacement,
) -> Result<OccupancyGrid> {
    if views.is_empty() {
        return Err(Error::NoViews);
    }
    if reference >= views.len() {
        return Err(Error::ViewOutOfRange { index: reference, count: views.len() });
    }
    let ref_pose = views[reference].pose;
    let transforms: Vec<Option<Pose>> = (0..views.len())
        .map(|i| {
            if i == reference {
                None
            } else {
                Some(views[i].pose.invert().compose(&ref_pose))
            }
        })
        .collect();

    let r = placement.resolution as usize;
    let mut bits = vec![false; placement.voxel_count()];
    bits.par_chunks_mut(r * r).enumerate().for_each(|(i, plane)| {
        for j in 0..r {
            for k in 0..r {
                let center = placement.voxel_center_unchecked(i as u32, j as u32, k as u32);
                let mut visible = 0u32;
                let mut carved = false;
                for (view, transform) in views.iter().zip(transforms.iter()) {
                    let p_cam = match transform {
                        None => center,
                        Some(t) => t.transform_point(&center),
                    };
                    if p_cam.z <= Z_NEAR {
                        continue;
                    }
                    let Ok((u, v, _)) = project(&p_cam, &view.intrinsics) else {
                        continue;
                    };
                    let w = view.intrinsics.width as f64;
                    let h = view.intrinsics.height as f64;
                    if !(u >= 0.0 && u < w && v >= 0.0 && v < h) {
                        continue;
                    }
                    visible += 1;
                    let px = u.floor() as usize;
                    let py = v.floor() as usize;
                    if !view.mask[py * view.intrinsics.width as usize + px] {
                        carved = true;
                        break;
                    }
                }
                plane[j * r + k] = visible >= 1 && !carved;
            }
        }
    });

    OccupancyGrid::new(*placement, bits)
}

/// Separable box filter with truncated windows (each axis renormalizes by
/// the in-bounds sample count), kernel width `2*width + 1` per axis.
pub fn box_smooth_sdf(grid: &SdfGrid, width: u32) -> SdfGrid {
    if width == 0 {
        return grid.clone();
    }
    let r = grid.placement.resolution as usize;
    let w = width as i64;
    let idx = |i: usize, j: usize, k: usize| (i * r + j) * r + k;
    let mut values = grid.values.clone();
    for axis in 0..3 {
        let prev = values.clone();
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    let pos = [i as i64, j as i64, k as i64][axis];
                    let mut sum = 0.0;
                    let mut count = 0u32;
                    for o in -w..=w {
                        let q = pos + o;
                        if q < 0 || q >= r as i64 {
                            continue;
                        }
                        let (qi, qj, qk) = match axis {
                            0 => (q as usize, j, k),
                            1 => (i, q as usize, k),
                            _ => (i, j, q as usize),
                        };
                        sum += prev[idx(qi, qj, qk)];
                        count += 1;
                    }
                    values[idx(i, j, k)] = sum / count as f64;
                }
            }
        }
    }
    SdfGrid { placement: grid.placement, values }
}

/// Full stand-in pipeline: carve, convert to a signed distance field,
/// smooth, extract the zero level set. Empty views everywhere yield an
/// empty mesh.
pub fn generate_mesh(
    views: &[MaskView],
    reference: usize,
    placement: &CubePlacement,
    smooth_width: u32,
) -> Result<TriMesh> {
    let occupancy = carve(views, reference, placement)?;
    let sdf = sdf_from_occupancy(&occupancy);
    let sdf = box_smooth_sdf(&sdf, smooth_width);
    marching_cubes(&sdf, 0.0)
}
