//! Scene composition: per-object scale/depth recovery against a global
//! point map, and composed-scene export.
//!
//! Each generated object lives in the scene camera's frame and is already
//! pixel-aligned; under perspective the only similarity that preserves
//! that alignment is a uniform scale about the camera origin. The single
//! scale alpha therefore fixes apparent size and depth jointly, and has
//! the closed form alpha = sum<p, q> / sum<p, p> minimizing
//! sum ||alpha p - q||^2 over the constraint pixels.

use nalgebra::Vector3;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::eval::raster::{render_depth, DepthMap};
use crate::placement::CubePlacement;
use crate::pxt::Tensor;
use crate::volume::TriMesh;

/// Per-pixel 3D points in the scene camera frame (what an external
/// point-map predictor produces).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPointMap {
    pub width: u32,
    pub height: u32,
    pub points: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
}

impl GlobalPointMap {
    pub fn new(
        width: u32,
        height: u32,
        points: Vec<Vector3<f64>>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width as usize * height as usize;
        if points.len() != n || valid.len() != n {
            return Err(Error::ShapeMismatch("point map arrays disagree with dims".into()));
        }
        for (p, &ok) in points.iter().zip(valid.iter()) {
            if ok && !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::ShapeMismatch("point map has non-finite valid points".into()));
            }
        }
        Ok(Self { width, height, points, valid })
    }

    /// Back-projects a rendered depth map at pixel centers:
    /// p = (z * (u+0.5-cx)/fx, z * (v+0.5-cy)/fy, z).
    pub fn from_depth(depth: &DepthMap, intr: &CameraIntrinsics) -> Self {
        let w = depth.width as usize;
        let h = depth.height as usize;
        let mut points = vec![Vector3::zeros(); w * h];
        let mut valid = vec![false; w * h];
        for py in 0..h {
            for px in 0..w {
                let i = py * w + px;
                if !depth.valid[i] {
                    continue;
                }
                let z = depth.values[i];
                points[i] = Vector3::new(
                    z * (px as f64 + 0.5 - intr.cx) / intr.fx,
                    z * (py as f64 + 0.5 - intr.cy) / intr.fy,
                    z,
                );
                valid[i] = true;
            }
        }
        Self { width: depth.width, height: depth.height, points, valid }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            points: self.points.iter().map(|p| p * factor).collect(),
            valid: self.valid.clone(),
        }
    }

    /// H x W x 4 f32 tensor (x, y, z, valid flag).
    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.points.len() * 4);
        for (p, &ok) in self.points.iter().zip(self.valid.iter()) {
            if ok {
                data.extend_from_slice(&[p.x as f32, p.y as f32, p.z as f32, 1.0]);
            } else {
                data.extend_from_slice(&[0.0, 0.0, 0.0, 0.0]);
            }
        }
        Tensor::new_f32(vec![self.height as u64, self.width as u64, 4], data).unwrap()
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims.len() != 3 || t.dims[2] != 4 {
            return Err(Error::Pxt(format!(
                "point map tensor must be H x W x 4, got {:?}",
                t.dims
            )));
        }
        let data = t.as_f32()?;
        let (h, w) = (t.dims[0] as u32, t.dims[1] as u32);
        let count = h as usize * w as usize;
        let mut points = vec![Vector3::zeros(); count];
        let mut valid = vec![false; count];
        for i in 0..count {
            let px = &data[i * 4..i * 4 + 4];
            if px[3] != 0.0 {
                points[i] = Vector3::new(px[0] as f64, px[1] as f64, px[2] as f64);
                valid[i] = true;
            }
        }
        GlobalPointMap::new(w, h, points, valid)
    }
}

/// One pixel-aligned object to place into the scene.
#[derive(Debug, Clone)]
pub struct SceneObject {
    pub id: String,
    /// Mesh in the scene camera's frame.
    pub mesh: TriMesh,
    /// The object's un-occluded pixels in the scene image.
    pub visibility_mask: Vec<bool>,
    pub placement: CubePlacement,
    pub intrinsics: CameraIntrinsics,
}

impl SceneObject {
    pub fn validate(&self) -> Result<()> {
        if self.mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        self.mesh.validate()?;
        let expect = self.intrinsics.width as usize * self.intrinsics.height as usize;
        if self.visibility_mask.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "visibility mask has {} pixels, intrinsics imply {}",
                self.visibility_mask.len(),
                expect
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    pub alpha: f64,
    pub residual_rms: f64,
    pub pixel_count: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AlignOptions {
    /// Fewest constraint pixels accepted before giving up.
    pub min_support: usize,
    /// Fraction of worst-residual pixels dropped in one trimming round;
    /// zero disables trimming.
    pub trim_fraction: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self { min_support: 10, trim_fraction: 0.0 }
    }
}

fn solve_alpha(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Result<(f64, f64)> {
    let mut pq = 0.0;
    let mut pp = 0.0;
    for (p, q) in pairs {
        pq += p.dot(q);
        pp += p.dot(p);
    }
    if pp <= 1e-12 {
        return Err(Error::DegenerateAlignment(format!("sum<p,p> = {pp} is not positive")));
    }
    let alpha = pq / pp;
    if alpha <= 0.0 {
        return Err(Error::DegenerateAlignment(format!("alpha = {alpha} is not positive")));
    }
    let mut sq = 0.0;
    for (p, q) in pairs {
        sq += (p * alpha - q).norm_squared();
    }
    Ok((alpha, (sq / pairs.len() as f64).sqrt()))
}

/// Recovers the object's scale about the camera origin from the global
/// point map: renders the object's depth, back-projects every pixel in
/// `visibility_mask AND map.valid AND depth-valid` to a point p, pairs it
/// with the map point q, and solves min_alpha sum ||alpha p - q||^2 in
/// closed form.
pub fn align_object(
    obj: &SceneObject,
    map: &GlobalPointMap,
    opts: &AlignOptions,
) -> Result<AlignmentResult> {
    obj.validate()?;
    if map.width != obj.intrinsics.width || map.height != obj.intrinsics.height {
        return Err(Error::ShapeMismatch(format!(
            "point map is {}x{} but the scene camera is {}x{}",
            map.width, map.height, obj.intrinsics.width, obj.intrinsics.height
        )));
    }
    let depth = render_depth(&obj.mesh, &obj.intrinsics, &crate::camera::Pose::identity())?;
    let object_points = GlobalPointMap::from_depth(&depth, &obj.intrinsics);

    let mut pairs: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
    for i in 0..map.points.len() {
        if obj.visibility_mask[i] && map.valid[i] && object_points.valid[i] {
            pairs.push((object_points.points[i], map.points[i]));
        }
    }
    if pairs.len() < opts.min_support {
        return Err(Error::InsufficientSupport { found: pairs.len(), min: opts.min_support });
    }

    let (mut alpha, mut rms) = solve_alpha(&pairs)?;

    if opts.trim_fraction > 0.0 {
        let drop = ((pairs.len() as f64) * opts.trim_fraction).floor() as usize;
        if drop > 0 && pairs.len() - drop >= opts.min_support {
            let mut residuals: Vec<(f64, usize)> = pairs
                .iter()
                .enumerate()
                .map(|(i, (p, q))| ((p * alpha - q).norm_squared(), i))
                .collect();
            residuals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            residuals.truncate(pairs.len() - drop);
            let kept: Vec<(Vector3<f64>, Vector3<f64>)> =
                residuals.iter().map(|&(_, i)| pairs[i]).collect();
            let (a2, r2) = solve_alpha(&kept)?;
            alpha = a2;
            rms = r2;
            pairs = kept;
        }
    }

    Ok(AlignmentResult { alpha, residual_rms: rms, pixel_count: pairs.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformRecord {
    pub id: String,
    pub alpha: f64,
}

/// Scales every object about the camera origin by its alpha and
/// concatenates the meshes, reindexing triangles.
pub fn compose_scene(
    objects: &[SceneObject],
    results: &[AlignmentResult],
) -> Result<(TriMesh, Vec<TransformRecord>)> {
    if objects.len() != results.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} objects but {} alignment results",
            objects.len(),
            results.len()
        )));
    }
    let mut mesh = TriMesh::default();
    let mut records = Vec::with_capacity(objects.len());
    for (obj, res) in objects.iter().zip(results.iter()) {
        let base = mesh.vertices.len() as u32;
        mesh.vertices.extend(obj.mesh.vertices.iter().map(|v| v * res.alpha));
        mesh.triangles.extend(obj.mesh.triangles.iter().map(|t| t.map(|i| i + base)));
        records.push(TransformRecord { id: obj.id.clone(), alpha: res.alpha });
    }
    Ok((mesh, records))
}
