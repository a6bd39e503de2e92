//! Software rasterization of meshes into normal and depth maps.
//!
//! Perspective z-buffer sampled at pixel centers (u + 0.5, v + 0.5).
//! Triangles are walked in index order with a strict depth test, so the
//! lowest triangle index wins exact depth ties and the output is
//! deterministic. Triangles with any vertex at or behind the near plane
//! are skipped rather than clipped; the synthetic scenes this crate
//! targets keep geometry well in front of the camera.

use nalgebra::Vector3;

use crate::camera::{project, unproject, CameraIntrinsics, Pose, Z_NEAR};
use crate::error::{Error, Result};
use crate::pxt::Tensor;
use crate::volume::TriMesh;

/// Per-pixel unit surface normals in the camera frame; invalid where the
/// mesh does not cover the pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub width: u32,
    pub height: u32,
    pub normals: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl NormalMap {
    pub fn validate(&self) -> Result<()> {
        let n = self.width as usize * self.height as usize;
        if self.normals.len() != n || self.valid.len() != n {
            return Err(Error::ShapeMismatch("normal map arrays disagree with dims".into()));
        }
        for (i, (nv, &ok)) in self.normals.iter().zip(self.valid.iter()).enumerate() {
            if ok {
                let norm = (nv[0] * nv[0] + nv[1] * nv[1] + nv[2] * nv[2]).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(Error::ShapeMismatch(format!(
                        "pixel {i}: normal has length {norm}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// H x W x 4 f32 tensor (nx, ny, nz, valid flag).
    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.normals.len() * 4);
        for (n, &ok) in self.normals.iter().zip(self.valid.iter()) {
            data.push(n[0] as f32);
            data.push(n[1] as f32);
            data.push(n[2] as f32);
            data.push(if ok { 1.0 } else { 0.0 });
        }
        Tensor::new_f32(vec![self.height as u64, self.width as u64, 4], data).unwrap()
    }

    /// Inverse of `to_tensor`. Normals are re-normalized in f64 on load so
    /// downstream angular metrics see exactly unit vectors.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims.len() != 3 || t.dims[2] != 4 {
            return Err(Error::Pxt(format!(
                "normal map tensor must be H x W x 4, got {:?}",
                t.dims
            )));
        }
        let data = t.as_f32()?;
        let (h, w) = (t.dims[0] as u32, t.dims[1] as u32);
        let count = (h as usize) * (w as usize);
        let mut normals = vec![[0.0; 3]; count];
        let mut valid = vec![false; count];
        for i in 0..count {
            let px = &data[i * 4..i * 4 + 4];
            if px[3] != 0.0 {
                let v = Vector3::new(px[0] as f64, px[1] as f64, px[2] as f64);
                let norm = v.norm();
                if norm < 1e-12 {
                    return Err(Error::Pxt(format!("pixel {i}: valid flag with zero normal")));
                }
                let u = v / norm;
                normals[i] = [u.x, u.y, u.z];
                valid[i] = true;
            }
        }
        Ok(NormalMap { width: w, height: h, normals, valid })
    }
}

/// Per-pixel z depth in the camera frame; invalid where uncovered.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    /// H x W x 2 f32 tensor (depth, valid flag).
    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.values.len() * 2);
        for (&z, &ok) in self.values.iter().zip(self.valid.iter()) {
            data.push(if ok { z as f32 } else { 0.0 });
            data.push(if ok { 1.0 } else { 0.0 });
        }
        Tensor::new_f32(vec![self.height as u64, self.width as u64, 2], data).unwrap()
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims.len() != 3 || t.dims[2] != 2 {
            return Err(Error::Pxt(format!(
                "depth map tensor must be H x W x 2, got {:?}",
                t.dims
            )));
        }
        let data = t.as_f32()?;
        let (h, w) = (t.dims[0] as u32, t.dims[1] as u32);
        let count = (h as usize) * (w as usize);
        let mut values = vec![0.0; count];
        let mut valid = vec![false; count];
        for i in 0..count {
            if data[i * 2 + 1] != 0.0 {
                values[i] = data[i * 2] as f64;
                valid[i] = true;
            }
        }
        Ok(DepthMap { width: w, height: h, values, valid })
    }
}

struct RasterBuffer {
    depth: Vec<f64>,
    tri: Vec<i64>,
}

/// Z-buffer rasterization of a camera-frame mesh. Returns per-pixel depth
/// and winning triangle index (-1 where uncovered).
fn rasterize(mesh: &TriMesh, intr: &CameraIntrinsics) -> RasterBuffer {
    let w = intr.width as usize;
    let h = intr.height as usize;
    let mut buf = RasterBuffer { depth: vec![f64::INFINITY; w * h], tri: vec![-1; w * h] };

    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.vertices[tri[0] as usize];
        let b = mesh.vertices[tri[1] as usize];
        let c = mesh.vertices[tri[2] as usize];
        if a.z <= Z_NEAR || b.z <= Z_NEAR || c.z <= Z_NEAR {
            continue;
        }
        let pa = project(&a, intr).unwrap();
        let pb = project(&b, intr).unwrap();
        let pc = project(&c, intr).unwrap();

        let min_u = pa.0.min(pb.0).min(pc.0);
        let max_u = pa.0.max(pb.0).max(pc.0);
        let min_v = pa.1.min(pb.1).min(pc.1);
        let max_v = pa.1.max(pb.1).max(pc.1);
        // Pixels whose centers fall inside the bounding box.
        let px0 = ((min_u - 0.5).ceil().max(0.0)) as i64;
        let px1 = ((max_u - 0.5).floor()).min(w as f64 - 1.0) as i64;
        let py0 = ((min_v - 0.5).ceil().max(0.0)) as i64;
        let py1 = ((max_v - 0.5).floor()).min(h as f64 - 1.0) as i64;
        if px0 > px1 || py0 > py1 {
            continue;
        }

        let edge = |p: (f64, f64, f64), q: (f64, f64, f64), x: f64, y: f64| -> f64 {
            (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0)
        };
        let total = edge(pa, pb, pc.0, pc.1);
        if total.abs() < 1e-18 {
            continue;
        }

        for py in py0..=py1 {
            for px in px0..=px1 {
                let x = px as f64 + 0.5;
                let y = py as f64 + 0.5;
                let e0 = edge(pb, pc, x, y);
                let e1 = edge(pc, pa, x, y);
                let e2 = edge(pa, pb, x, y);
                let inside = (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0)
                    || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0);
                if !inside {
                    continue;
                }
                let la = e0 / total;
                let lb = e1 / total;
                let lc = e2 / total;
                // Affine interpolation of 1/z is exact under perspective.
                let inv_z = la / a.z + lb / b.z + lc / c.z;
                if inv_z <= 0.0 {
                    continue;
                }
                let z = 1.0 / inv_z;
                let pix = py as usize * w + px as usize;
                if z < buf.depth[pix] {
                    buf.depth[pix] = z;
                    buf.tri[pix] = t as i64;
                }
            }
        }
    }
    buf
}

fn to_camera_frame(mesh: &TriMesh, pose: &Pose) -> TriMesh {
    if pose.is_identity() {
        mesh.clone()
    } else {
        mesh.transformed(&pose.invert())
    }
}

/// Renders flat per-face normals of the mesh into the camera given by
/// `pose` (world-from-camera; the mesh lives in the world frame). Normals
/// are expressed in the camera frame and flipped to face the camera (the
/// per-pixel view ray) when needed.
pub fn render_normals(mesh: &TriMesh, intr: &CameraIntrinsics, pose: &Pose) -> Result<NormalMap> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    intr.validate()?;
    let cam_mesh = to_camera_frame(mesh, pose);
    let buf = rasterize(&cam_mesh, intr);

    let face_normals: Vec<Vector3<f64>> = (0..cam_mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = cam_mesh.triangle_vertices(t);
            let n = (b - a).cross(&(c - a));
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vector3::zeros()
            }
        })
        .collect();

    let w = intr.width as usize;
    let h = intr.height as usize;
    let mut normals = vec![[0.0; 3]; w * h];
    let mut valid = vec![false; w * h];
    for py in 0..h {
        for px in 0..w {
            let pix = py * w + px;
            let t = buf.tri[pix];
            if t < 0 {
                continue;
            }
            let mut n = face_normals[t as usize];
            if n == Vector3::zeros() {
                continue;
            }
            let ray = unproject(px as f64 + 0.5, py as f64 + 0.5, intr);
            if n.dot(&ray.direction) > 0.0 {
                n = -n;
            }
            normals[pix] = [n.x, n.y, n.z];
            valid[pix] = true;
        }
    }
    Ok(NormalMap { width: intr.width, height: intr.height, normals, valid })
}

/// Renders the z-buffer depth of the mesh into the camera given by `pose`.
pub fn render_depth(mesh: &TriMesh, intr: &CameraIntrinsics, pose: &Pose) -> Result<DepthMap> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    intr.validate()?;
    let cam_mesh = to_camera_frame(mesh, pose);
    let buf = rasterize(&cam_mesh, intr);
    let valid: Vec<bool> = buf.tri.iter().map(|&t| t >= 0).collect();
    let values: Vec<f64> =
        buf.depth.iter().map(|&z| if z.is_finite() { z } else { 0.0 }).collect();
    Ok(DepthMap { width: intr.width, height: intr.height, values, valid })
}
