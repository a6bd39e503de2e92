//! Back-projection feature lifting: projects voxel centers into one or
//! more views, samples multi-scale 2D feature maps and fills a
//! pixel-aligned 3D feature volume.
//!
//! The arithmetic is pinned so independent reimplementations can match it
//! bitwise:
//! - bilinear sample (per level, f64): `lerp(lerp(v00, v10, fx), lerp(v01,
//!   v11, fx), fy)` with `lerp(a, b, t) = a + t * (b - a)`, texel centers
//!   at half-integer coordinates, borders clamped, level coordinates
//!   `u_l = u * (w_l / full_w)`;
//! - per-view feature: sequential sum over levels divided by level count;
//! - fused feature: sequential sum over contributing views in input order,
//!   divided by the contributing count;
//! - non-reference voxel centers are mapped with the per-view transform
//!   `view_from_ref = pose_view.invert().compose(pose_ref)`, precomputed
//!   once per view; the reference view uses centers directly.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{project, CameraIntrinsics, Pose, Z_NEAR};
use crate::error::{Error, Result};
use crate::placement::CubePlacement;

/// Single-scale 2D feature map, row-major (row, column, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: u32, width: u32, channels: u32, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::ShapeMismatch("feature map dimensions must be positive".into()));
        }
        let expect = height as usize * width as usize * channels as usize;
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "feature map data has {} values, dims imply {}",
                data.len(),
                expect
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("feature map contains non-finite values".into()));
        }
        Ok(Self { height, width, channels, data })
    }

    #[inline]
    fn texel(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width as usize + x) * self.channels as usize + c] as f64
    }

    /// Reads an H x W x C (or H x W, taken as single-channel) f32 tensor.
    pub fn from_tensor(t: &crate::pxt::Tensor) -> Result<Self> {
        let (h, w, c) = match t.dims.as_slice() {
            [h, w] => (*h, *w, 1),
            [h, w, c] => (*h, *w, *c),
            other => {
                return Err(Error::Pxt(format!(
                    "feature map tensor must be H x W x C, got {other:?}"
                )))
            }
        };
        FeatureMap::new(h as u32, w as u32, c as u32, t.as_f32()?.to_vec())
    }
}

/// Multi-scale stack of feature maps referring to one image; all levels
/// share the channel count and are addressed in full-resolution pixel
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub levels: Vec<FeatureMap>,
    pub full_width: u32,
    pub full_height: u32,
}

impl FeaturePyramid {
    pub fn new(levels: Vec<FeatureMap>, full_width: u32, full_height: u32) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::ShapeMismatch("pyramid needs at least one level".into()));
        }
        let channels = levels[0].channels;
        if levels.iter().any(|l| l.channels != channels) {
            return Err(Error::ShapeMismatch(
                "pyramid levels must share the channel count".into(),
            ));
        }
        Ok(Self { levels, full_width, full_height })
    }

    pub fn channels(&self) -> u32 {
        self.levels[0].channels
    }
}

#[derive(Debug, Clone)]
pub struct ViewInput {
    pub pyramid: FeaturePyramid,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl ViewInput {
    pub fn new(pyramid: FeaturePyramid, intrinsics: CameraIntrinsics, pose: Pose) -> Result<Self> {
        intrinsics.validate()?;
        if intrinsics.width != pyramid.full_width || intrinsics.height != pyramid.full_height {
            return Err(Error::ShapeMismatch(format!(
                "intrinsics are {}x{} but the pyramid full resolution is {}x{}",
                intrinsics.width, intrinsics.height, pyramid.full_width, pyramid.full_height
            )));
        }
        Ok(Self { pyramid, intrinsics, pose })
    }
}

/// Lifted per-voxel features. Voxels that project into no view are invalid
/// and hold zeros; `valid[v]` is exactly `view_count[v] > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub resolution: u32,
    pub channels: u32,
    /// R*R*R*channels, index order (i, j, k, c), c fastest.
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
    pub view_count: Vec<u32>,
}

impl FeatureVolume {
    pub fn voxel_features(&self, i: u32, j: u32, k: u32, r: u32) -> &[f64] {
        let c = self.channels as usize;
        let idx = ((i as usize * r as usize + j as usize) * r as usize + k as usize) * c;
        &self.data[idx..idx + c]
    }

    /// Dense R x R x R x (C+1) f32 tensor; the extra last channel stores
    /// the per-voxel contributing view count (validity is count > 0).
    pub fn to_tensor(&self) -> crate::pxt::Tensor {
        let r = self.resolution as usize;
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(r * r * r * (c + 1));
        for v in 0..r * r * r {
            for ch in 0..c {
                data.push(self.data[v * c + ch] as f32);
            }
            data.push(self.view_count[v] as f32);
        }
        crate::pxt::Tensor::new_f32(
            vec![r as u64, r as u64, r as u64, (c + 1) as u64],
            data,
        )
        .unwrap()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let r = self.resolution as usize;
        let c = self.channels as usize;
        if self.data.len() != r * r * r * c
            || self.valid.len() != r * r * r
            || self.view_count.len() != r * r * r
        {
            return Err(Error::ShapeMismatch("feature volume arrays disagree".into()));
        }
        for v in 0..r * r * r {
            if self.valid[v] != (self.view_count[v] > 0) {
                return Err(Error::ShapeMismatch("validity mask disagrees with view counts".into()));
            }
            if !self.valid[v] && self.data[v * c..(v + 1) * c].iter().any(|&x| x != 0.0) {
                return Err(Error::ShapeMismatch("invalid voxel carries nonzero features".into()));
            }
        }
        Ok(())
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinearly samples one level at full-resolution coordinates (u, v),
/// adding the result into `acc` (one slot per channel).
fn sample_level_into(map: &FeatureMap, u: f64, v: f64, full_w: u32, full_h: u32, acc: &mut [f64]) {
    let ul = u * (map.width as f64 / full_w as f64);
    let vl = v * (map.height as f64 / full_h as f64);
    let x = ul - 0.5;
    let y = vl - 0.5;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let w = map.width as i64;
    let h = map.height as i64;
    let clamp = |v: f64, hi: i64| -> usize { (v as i64).clamp(0, hi - 1) as usize };
    let ix0 = clamp(x0, w);
    let ix1 = clamp(x0 + 1.0, w);
    let iy0 = clamp(y0, h);
    let iy1 = clamp(y0 + 1.0, h);
    for c in 0..map.channels as usize {
        let top = lerp(map.texel(ix0, iy0, c), map.texel(ix1, iy0, c), fx);
        let bot = lerp(map.texel(ix0, iy1, c), map.texel(ix1, iy1, c), fx);
        acc[c] += lerp(top, bot, fy);
    }
}

/// Bilinear sample of a map at full-resolution pixel coordinates, one value
/// per channel. Coordinates outside the map clamp to the border texels.
pub fn sample_bilinear(map: &FeatureMap, u: f64, v: f64, full_w: u32, full_h: u32) -> Vec<f64> {
    let mut out = vec![0.0; map.channels as usize];
    sample_level_into(map, u, v, full_w, full_h, &mut out);
    out
}

/// Nearest-texel sample, used only by oracle tests and diagnostics.
pub fn sample_nearest(map: &FeatureMap, u: f64, v: f64, full_w: u32, full_h: u32) -> Vec<f64> {
    let ul = u * (map.width as f64 / full_w as f64);
    let vl = v * (map.height as f64 / full_h as f64);
    let x = (ul.floor() as i64).clamp(0, map.width as i64 - 1) as usize;
    let y = (vl.floor() as i64).clamp(0, map.height as i64 - 1) as usize;
    (0..map.channels as usize).map(|c| map.texel(x, y, c)).collect()
}

/// Per-view feature at a camera-frame point: mean over pyramid levels of
/// the bilinear samples, or None when the point falls outside the view.
fn view_feature(view: &ViewInput, p_cam: &Vector3<f64>, out: &mut [f64]) -> bool {
    if p_cam.z <= Z_NEAR {
        return false;
    }
    let Ok((u, v, _)) = project(p_cam, &view.intrinsics) else {
        return false;
    };
    let w = view.intrinsics.width as f64;
    let h = view.intrinsics.height as f64;
    if !(u >= 0.0 && u < w && v >= 0.0 && v < h) {
        return false;
    }
    out.fill(0.0);
    for level in &view.pyramid.levels {
        sample_level_into(level, u, v, view.pyramid.full_width, view.pyramid.full_height, out);
    }
    let n = view.pyramid.levels.len() as f64;
    for x in out.iter_mut() {
        *x /= n;
    }
    true
}

/// Lifts a single view into the cube defined in that view's own camera
/// frame (the pose is not consulted).
pub fn lift_single(view: &ViewInput, placement: &CubePlacement) -> Result<FeatureVolume> {
    fuse_in_frames(std::slice::from_ref(view), &[None], placement)
}

/// Fuses several views into the cube fixed in the reference view's camera
/// frame, averaging per-voxel over the views that see each voxel.
pub fn fuse_views(
    views: &[ViewInput],
    reference: usize,
    placement: &CubePlacement,
) -> Result<FeatureVolume> {
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
    fuse_in_frames(views, &transforms, placement)
}

/// Shared implementation: `view_from_ref[i]` maps cube-frame points into
/// view i's camera frame, None meaning the identity (the reference view).
fn fuse_in_frames(
    views: &[ViewInput],
    view_from_ref: &[Option<Pose>],
    placement: &CubePlacement,
) -> Result<FeatureVolume> {
    let channels = views[0].pyramid.channels();
    if views.iter().any(|v| v.pyramid.channels() != channels) {
        return Err(Error::ShapeMismatch("views must share the feature channel count".into()));
    }

    let r = placement.resolution as usize;
    let c = channels as usize;
    let mut data = vec![0.0f64; r * r * r * c];
    let mut valid = vec![false; r * r * r];
    let mut view_count = vec![0u32; r * r * r];

    data.par_chunks_mut(r * r * c)
        .zip(valid.par_chunks_mut(r * r))
        .zip(view_count.par_chunks_mut(r * r))
        .enumerate()
        .for_each(|(i, ((plane, valid_plane), count_plane))| {
            let mut sample = vec![0.0f64; c];
            for j in 0..r {
                for k in 0..r {
                    let center =
                        placement.voxel_center_unchecked(i as u32, j as u32, k as u32);
                    let voxel = &mut plane[(j * r + k) * c..(j * r + k + 1) * c];
                    let mut hits = 0u32;
                    for (view, transform) in views.iter().zip(view_from_ref.iter()) {
                        let p_cam = match transform {
                            None => center,
                            Some(t) => t.transform_point(&center),
                        };
                        if view_feature(view, &p_cam, &mut sample) {
                            for (dst, &s) in voxel.iter_mut().zip(sample.iter()) {
                                *dst += s;
                            }
                            hits += 1;
                        }
                    }
                    if hits > 0 {
                        let n = hits as f64;
                        for dst in voxel.iter_mut() {
                            *dst /= n;
                        }
                    }
                    valid_plane[j * r + k] = hits > 0;
                    count_plane[j * r + k] = hits;
                }
            }
        });

    Ok(FeatureVolume { resolution: placement.resolution, channels, data, valid, view_count })
}

/// Adds the feature volume onto a same-shaped target tensor (R^3 x C,
/// voxel-major, channel fastest). Invalid voxels hold zeros and therefore
/// leave the target unchanged.
pub fn condition_add(volume: &FeatureVolume, target: &[f64]) -> Result<Vec<f64>> {
    if target.len() != volume.data.len() {
        return Err(Error::ShapeMismatch(format!(
            "target has {} values, feature volume has {}",
            target.len(),
            volume.data.len()
        )));
    }
    Ok(volume.data.iter().zip(target.iter()).map(|(a, b)| a + b).collect())
}
