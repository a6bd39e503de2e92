//! Synthetic test data: analytic shapes, orbit cameras and rendered
//! ground-truth views for exercising the full pipeline without any learned
//! components.

use nalgebra::Vector3;

use crate::camera::{fov_to_intrinsics, CameraIntrinsics, Pose};
use crate::error::{Error, Result};
use crate::eval::raster::{render_depth, render_normals, DepthMap, NormalMap};
use crate::placement::{auto_place, CubePlacement};
use crate::scene::GlobalPointMap;
use crate::volume::TriMesh;

/// Axis-aligned box as 12 outward-oriented triangles.
pub fn box_mesh(center: &Vector3<f64>, half_extents: &Vector3<f64>) -> TriMesh {
    let mut vertices = Vec::with_capacity(8);
    for c in 0..8u32 {
        let sx = if c & 1 == 1 { 1.0 } else { -1.0 };
        let sy = if c & 2 == 2 { 1.0 } else { -1.0 };
        let sz = if c & 4 == 4 { 1.0 } else { -1.0 };
        vertices.push(Vector3::new(
            center.x + sx * half_extents.x,
            center.y + sy * half_extents.y,
            center.z + sz * half_extents.z,
        ));
    }
    // Face cycles counterclockwise viewed from outside (corner index
    // convention c = dx + 2*dy + 4*dz).
    let faces: [[u32; 4]; 6] = [
        [0, 4, 6, 2],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 2, 3, 1],
        [4, 5, 7, 6],
    ];
    let mut triangles = Vec::with_capacity(12);
    for f in &faces {
        triangles.push([f[0], f[1], f[2]]);
        triangles.push([f[0], f[2], f[3]]);
    }
    TriMesh { vertices, triangles }
}

/// Icosphere: subdivided icosahedron projected onto the sphere, outward
/// oriented and watertight.
pub fn icosphere(center: &Vector3<f64>, radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let mut unit: Vec<Vector3<f64>> =
        raw.iter().map(|&(x, y, z)| Vector3::new(x, y, z).normalize()).collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: std::collections::HashMap<(u32, u32), u32> =
            std::collections::HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mids = [0u32; 3];
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[i] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (unit[a as usize] + unit[b as usize]).normalize();
                    unit.push(m);
                    (unit.len() - 1) as u32
                });
            }
            next.push([tri[0], mids[0], mids[2]]);
            next.push([tri[1], mids[1], mids[0]]);
            next.push([tri[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        triangles = next;
    }

    TriMesh {
        vertices: unit.iter().map(|v| center + v * radius).collect(),
        triangles,
    }
}

/// Torus around the +y axis: ring of radius `major_r` in the x-z plane,
/// tube radius `minor_r`.
pub fn torus_mesh(
    center: &Vector3<f64>,
    major_r: f64,
    minor_r: f64,
    seg_major: u32,
    seg_minor: u32,
) -> TriMesh {
    let mut vertices = Vec::with_capacity((seg_major * seg_minor) as usize);
    for i in 0..seg_major {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / seg_major as f64;
        for j in 0..seg_minor {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / seg_minor as f64;
            let ring = major_r + minor_r * phi.cos();
            vertices.push(Vector3::new(
                center.x + ring * theta.cos(),
                center.y + minor_r * phi.sin(),
                center.z + ring * theta.sin(),
            ));
        }
    }
    let at = |i: u32, j: u32| (i % seg_major) * seg_minor + (j % seg_minor);
    let mut triangles = Vec::with_capacity((seg_major * seg_minor * 2) as usize);
    for i in 0..seg_major {
        for j in 0..seg_minor {
            let a = at(i, j);
            let b = at(i, j + 1);
            let c = at(i + 1, j + 1);
            let d = at(i + 1, j);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriMesh { vertices, triangles }
}

/// World-from-camera pose looking from `eye` toward `target`, with the
/// camera's +y axis aligned with world +y ("down"). Fails when the view
/// direction is parallel to +y.
pub fn look_at_pose(eye: &Vector3<f64>, target: &Vector3<f64>) -> Result<Pose> {
    let forward = target - eye;
    if forward.norm() < 1e-12 {
        return Err(Error::InvalidArgument("look-at eye and target coincide".into()));
    }
    let z = forward.normalize();
    let down = Vector3::new(0.0, 1.0, 0.0);
    let x_raw = down.cross(&z);
    if x_raw.norm() < 1e-9 {
        return Err(Error::InvalidArgument("look-at direction is vertical".into()));
    }
    let x = x_raw.normalize();
    let y = z.cross(&x);
    let rotation = nalgebra::Matrix3::from_columns(&[x, y, z]);
    Pose::new(rotation, *eye)
}

/// `count` poses orbiting `target` at distance `dist`, azimuths evenly
/// spaced starting at the reference direction (the first pose is the
/// identity when `target` sits on the +z axis at `dist`). Elevations cycle
/// through a stagger chosen so that no two views are antipodal; antipodal
/// pairs share silhouette cones and weaken hull carving.
pub fn orbit_poses(target: &Vector3<f64>, dist: f64, count: usize) -> Result<Vec<Pose>> {
    const ELEVATION_CYCLE_DEG: [f64; 6] = [0.0, 20.0, -20.0, 35.0, -35.0, 15.0];
    let mut poses = Vec::with_capacity(count);
    for v in 0..count {
        if v == 0 {
            // Exact reference view: no trigonometric round-off.
            poses.push(look_at_pose(&(target - Vector3::new(0.0, 0.0, dist)), target)?);
            continue;
        }
        let azimuth = 2.0 * std::f64::consts::PI * v as f64 / count as f64;
        let elevation = ELEVATION_CYCLE_DEG[v % 6].to_radians();
        let offset = Vector3::new(
            dist * elevation.cos() * azimuth.sin(),
            -dist * elevation.sin(),
            -dist * elevation.cos() * azimuth.cos(),
        );
        poses.push(look_at_pose(&(target + offset), target)?);
    }
    Ok(poses)
}

/// Camera orbit distance for a synthetic case: far enough that (a) the
/// shape subtends at most 80% of the half field of view, and (b) each
/// view's frustum covers the central ball of the cube at its near face,
/// so every silhouette cone is seen (and carvable) by every other view.
/// The auto-placement distance is the floor.
pub fn orbit_distance(fov_deg: f64, shape_extent: f64, cube_scale: f64) -> Result<f64> {
    let auto_d = auto_place(fov_deg, cube_scale, 1)?.d;
    let half = fov_deg.to_radians() / 2.0;
    let framing = shape_extent / (0.8 * half).sin();
    let coverage = cube_scale / 2.0 + 0.9 * (cube_scale / 2.0) / half.tan();
    Ok(auto_d.max(framing).max(coverage))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Sphere,
    Box,
    Torus,
}

/// A fully specified synthetic case: an analytic shape centered in the
/// auto-placed cube, observed by an orbit of `views` cameras.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub shape: ShapeKind,
    /// Sphere radius, box half-extent, or torus (major + minor) extent.
    pub size: f64,
    /// Torus minor radius; ignored for other shapes.
    pub minor: f64,
    pub views: usize,
    pub fov_deg: f64,
    pub image_size: u32,
    pub grid: u32,
    pub subdivisions: u32,
    pub seed: u64,
}

impl Default for SyntheticCase {
    fn default() -> Self {
        Self {
            shape: ShapeKind::Sphere,
            size: 0.3,
            minor: 0.1,
            views: 6,
            fov_deg: crate::placement::DEFAULT_FOV_DEG,
            image_size: 256,
            grid: 64,
            subdivisions: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ViewData {
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub mask: Vec<bool>,
    pub normals: NormalMap,
    pub depth: DepthMap,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub placement: CubePlacement,
    pub mesh: TriMesh,
    pub views: Vec<ViewData>,
    /// Point map of the reference (first) view.
    pub point_map: GlobalPointMap,
}

/// Generates the ground-truth mesh, per-view masks / normals / depths and
/// the reference-view point map for a case. Deterministic.
///
/// The cube is centered on the orbit target, so its distance is the orbit
/// distance rather than the bare auto-placement one: the auto-placed cube
/// at small fields of view cannot both frame the shape with margin and
/// give every orbit view line of sight over the whole working volume.
pub fn generate(case: &SyntheticCase) -> Result<SyntheticData> {
    if case.views == 0 {
        return Err(Error::NoViews);
    }
    let extent = match case.shape {
        ShapeKind::Sphere => case.size,
        ShapeKind::Box => case.size * 3.0f64.sqrt(),
        ShapeKind::Torus => case.size + case.minor,
    };
    let dist = orbit_distance(case.fov_deg, extent, 1.0)?;
    let placement = CubePlacement::new(dist, 1.0, case.grid)
        .map_err(|e| Error::InvalidPlacement(e.to_string()))?;
    let intr = fov_to_intrinsics(case.fov_deg, case.image_size, case.image_size)?;
    let center = Vector3::new(0.0, 0.0, placement.d);

    let mesh = match case.shape {
        ShapeKind::Sphere => icosphere(&center, case.size, case.subdivisions),
        ShapeKind::Box => box_mesh(&center, &Vector3::new(case.size, case.size, case.size)),
        ShapeKind::Torus => {
            let seg = 16u32 << case.subdivisions.min(3);
            torus_mesh(&center, case.size, case.minor, seg, seg / 2)
        }
    };

    // The shape must stay inside the cube for the oracles to be valid.
    let half = placement.s / 2.0;
    for v in &mesh.vertices {
        let local = v - center;
        if local.x.abs() > half || local.y.abs() > half || local.z.abs() > half {
            return Err(Error::ShapeOutsideCube(format!(
                "vertex extends to {:?} from the cube center",
                local
            )));
        }
    }

    let poses = orbit_poses(&center, dist, case.views)?;

    let mut views = Vec::with_capacity(case.views);
    for pose in &poses {
        let cam_mesh = mesh.transformed(&pose.invert());
        let normals = render_normals(&cam_mesh, &intr, &Pose::identity())?;
        let depth = render_depth(&cam_mesh, &intr, &Pose::identity())?;
        let mask = depth.valid.clone();
        views.push(ViewData { intrinsics: intr, pose: *pose, mask, normals, depth });
    }

    let point_map = GlobalPointMap::from_depth(&views[0].depth, &intr);

    Ok(SyntheticData { placement, mesh, views, point_map })
}

/// Analytic silhouette mask of a sphere for a camera looking straight at
/// its center: the silhouette is the disk of angular radius asin(r/dist).
///
/// `conservative` marks a pixel true when any part of the pixel square
/// intersects the disk (a superset of the exact silhouette); otherwise the
/// pixel center decides.
pub fn sphere_mask(
    intr: &CameraIntrinsics,
    dist: f64,
    radius: f64,
    conservative: bool,
) -> Vec<bool> {
    let beta = (radius / dist).asin();
    let rho = intr.fx * beta.tan();
    let (w, h) = (intr.width as usize, intr.height as usize);
    let mut mask = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let covered = if conservative {
                // Distance from the disk center to the nearest point of the
                // pixel square [u, u+1) x [v, v+1).
                let dx = (intr.cx - (u as f64 + 1.0)).max(u as f64 - intr.cx).max(0.0);
                let dy = (intr.cy - (v as f64 + 1.0)).max(v as f64 - intr.cy).max(0.0);
                dx * dx + dy * dy <= rho * rho
            } else {
                let dx = u as f64 + 0.5 - intr.cx;
                let dy = v as f64 + 0.5 - intr.cy;
                dx * dx + dy * dy <= rho * rho
            };
            mask[v * w + u] = covered;
        }
    }
    mask
}
