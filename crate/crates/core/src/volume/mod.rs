//! Volumetric field types, mesh voxelization and surface extraction.

mod march;

pub use march::marching_cubes;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::placement::CubePlacement;

/// Triangle mesh with shared vertices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for v in &self.vertices {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::InvalidMesh("non-finite vertex".into()));
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("triangle {t} indexes past vertex count")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats an index")));
            }
        }
        Ok(())
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Rigidly transforms every vertex with `p_out = r * p + t`.
    pub fn transformed(&self, pose: &crate::camera::Pose) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| pose.transform_point(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }
}

/// Signed distances sampled at voxel centers; negative inside. Magnitudes
/// saturate at the cube diagonal `s * sqrt(3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub placement: CubePlacement,
    pub values: Vec<f64>,
}

impl SdfGrid {
    /// Dense R x R x R f32 tensor (the placement travels in a sidecar).
    pub fn to_tensor(&self) -> crate::pxt::Tensor {
        let r = self.placement.resolution as u64;
        let data: Vec<f32> = self.values.iter().map(|&v| v as f32).collect();
        crate::pxt::Tensor::new_f32(vec![r, r, r], data).unwrap()
    }

    pub fn from_tensor(t: &crate::pxt::Tensor, placement: CubePlacement) -> Result<Self> {
        let r = placement.resolution as u64;
        if t.dims != [r, r, r] {
            return Err(Error::Pxt(format!(
                "sdf tensor dims {:?} do not match placement resolution {r}",
                t.dims
            )));
        }
        let values: Vec<f64> = t.as_f32()?.iter().map(|&v| v as f64).collect();
        SdfGrid::new(placement, values)
    }

    pub fn new(placement: CubePlacement, values: Vec<f64>) -> Result<Self> {
        if values.len() != placement.voxel_count() {
            return Err(Error::ShapeMismatch(format!(
                "sdf grid has {} values, placement implies {}",
                values.len(),
                placement.voxel_count()
            )));
        }
        let bound = placement.s * 3.0f64.sqrt();
        if values.iter().any(|v| !v.is_finite() || v.abs() > bound + 1e-12) {
            return Err(Error::ShapeMismatch(
                "sdf values must be finite and within the cube diagonal bound".into(),
            ));
        }
        Ok(Self { placement, values })
    }

    #[inline]
    pub fn value(&self, i: u32, j: u32, k: u32) -> f64 {
        self.values[self.placement.linear_index(i, j, k)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub placement: CubePlacement,
    pub bits: Vec<bool>,
}

impl OccupancyGrid {
    /// Dense R x R x R u8 tensor, nonzero meaning occupied.
    pub fn to_tensor(&self) -> crate::pxt::Tensor {
        let r = self.placement.resolution as u64;
        let data: Vec<u8> = self.bits.iter().map(|&b| u8::from(b)).collect();
        crate::pxt::Tensor::new_u8(vec![r, r, r], data).unwrap()
    }

    pub fn from_tensor(t: &crate::pxt::Tensor, placement: CubePlacement) -> Result<Self> {
        let r = placement.resolution as u64;
        if t.dims != [r, r, r] {
            return Err(Error::Pxt(format!(
                "occupancy tensor dims {:?} do not match placement resolution {r}",
                t.dims
            )));
        }
        let bits: Vec<bool> = t.as_u8()?.iter().map(|&b| b != 0).collect();
        OccupancyGrid::new(placement, bits)
    }

    pub fn new(placement: CubePlacement, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != placement.voxel_count() {
            return Err(Error::ShapeMismatch(format!(
                "occupancy grid has {} bits, placement implies {}",
                bits.len(),
                placement.voxel_count()
            )));
        }
        Ok(Self { placement, bits })
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Closest point to `p` on triangle (a, b, c). Ericson's barycentric
/// region walk.
pub(crate) fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Signed solid angle of triangle (a, b, c) seen from `p`
/// (van Oosterom & Strackee).
pub(crate) fn triangle_solid_angle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> f64 {
    let ra = a - p;
    let rb = b - p;
    let rc = c - p;
    let la = ra.norm();
    let lb = rb.norm();
    let lc = rc.norm();
    let num = ra.dot(&rb.cross(&rc));
    let den = la * lb * lc + ra.dot(&rb) * lc + rb.dot(&rc) * la + rc.dot(&ra) * lb;
    2.0 * num.atan2(den)
}

/// Generalized winding number of the mesh at `p`; near ±1 inside a closed,
/// consistently oriented mesh.
pub fn winding_number(mesh: &TriMesh, p: &Vector3<f64>) -> f64 {
    let mut total = 0.0;
    for tri in &mesh.triangles {
        let a = &mesh.vertices[tri[0] as usize];
        let b = &mesh.vertices[tri[1] as usize];
        let c = &mesh.vertices[tri[2] as usize];
        total += triangle_solid_angle(p, a, b, c);
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Samples the mesh's signed distance field at every voxel center.
///
/// Magnitude is the exact distance to the nearest triangle; the sign comes
/// from the generalized winding number, inside when `|w| >= 0.5`, which
/// tolerates globally flipped orientation and near-watertight input.
pub fn voxelize_sdf(mesh: &TriMesh, placement: &CubePlacement) -> Result<SdfGrid> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    mesh.validate()?;
    let r = placement.resolution;
    let bound = placement.s * 3.0f64.sqrt();
    let tris: Vec<[Vector3<f64>; 3]> =
        (0..mesh.triangles.len()).map(|t| mesh.triangle_vertices(t)).collect();

    let mut values = vec![0.0f64; placement.voxel_count()];
    let r_us = r as usize;
    values
        .par_chunks_mut(r_us * r_us)
        .enumerate()
        .for_each(|(i, plane)| {
            for j in 0..r_us {
                for k in 0..r_us {
                    let p = placement.voxel_center_unchecked(i as u32, j as u32, k as u32);
                    let mut best = f64::INFINITY;
                    let mut omega = 0.0;
                    for [a, b, c] in &tris {
                        let q = closest_point_on_triangle(&p, a, b, c);
                        let d2 = (p - q).norm_squared();
                        if d2 < best {
                            best = d2;
                        }
                        omega += triangle_solid_angle(&p, a, b, c);
                    }
                    let unsigned = best.sqrt().min(bound);
                    let w = omega / (4.0 * std::f64::consts::PI);
                    let sign = if w.abs() >= 0.5 { -1.0 } else { 1.0 };
                    plane[j * r_us + k] = sign * unsigned;
                }
            }
        });

    SdfGrid::new(*placement, values)
}

/// Thresholds an SDF into occupancy: occupied where `value <= threshold`.
pub fn occupancy_from_sdf(grid: &SdfGrid, threshold: f64) -> OccupancyGrid {
    OccupancyGrid {
        placement: grid.placement,
        bits: grid.values.iter().map(|&v| v <= threshold).collect(),
    }
}

/// Exact two-sided Euclidean distance transform of an occupancy grid, in
/// world units. Outside voxels get +distance to the nearest occupied
/// center, inside voxels -distance to the nearest empty center; a uniform
/// grid gets the saturated cube diagonal.
pub fn sdf_from_occupancy(occ: &OccupancyGrid) -> SdfGrid {
    let placement = occ.placement;
    let bound = placement.s * 3.0f64.sqrt();
    let n = occ.bits.len();
    let occupied = occ.occupied_count();

    if occupied == 0 {
        return SdfGrid { placement, values: vec![bound; n] };
    }
    if occupied == n {
        return SdfGrid { placement, values: vec![-bound; n] };
    }

    let r = placement.resolution as usize;
    let to_occupied = edt3_squared(&occ.bits, r, true);
    let to_empty = edt3_squared(&occ.bits, r, false);
    let pitch = placement.pitch();

    let values = occ
        .bits
        .iter()
        .zip(to_occupied.iter().zip(to_empty.iter()))
        .map(|(&inside, (&d_occ, &d_emp))| {
            if inside {
                -(d_emp.sqrt() * pitch).min(bound)
            } else {
                (d_occ.sqrt() * pitch).min(bound)
            }
        })
        .collect();
    SdfGrid { placement, values }
}

/// Squared Euclidean distance (in voxel units) from every cell to the
/// nearest cell where `bits == target`, via the separable lower-envelope
/// transform (Felzenszwalb & Huttenlocher), one pass per axis.
fn edt3_squared(bits: &[bool], r: usize, target: bool) -> Vec<f64> {
    const FAR: f64 = 1e20;
    let mut field: Vec<f64> = bits.iter().map(|&b| if b == target { 0.0 } else { FAR }).collect();
    let idx = |i: usize, j: usize, k: usize| (i * r + j) * r + k;

    let mut line = vec![0.0f64; r];
    let mut out_line = vec![0.0f64; r];

    // Axis k (contiguous), then j, then i.
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                line[k] = field[idx(i, j, k)];
            }
            dt1d(&line, &mut out_line);
            for k in 0..r {
                field[idx(i, j, k)] = out_line[k];
            }
        }
    }
    for i in 0..r {
        for k in 0..r {
            for j in 0..r {
                line[j] = field[idx(i, j, k)];
            }
            dt1d(&line, &mut out_line);
            for j in 0..r {
                field[idx(i, j, k)] = out_line[j];
            }
        }
    }
    for j in 0..r {
        for k in 0..r {
            for i in 0..r {
                line[i] = field[idx(i, j, k)];
            }
            dt1d(&line, &mut out_line);
            for i in 0..r {
                field[idx(i, j, k)] = out_line[i];
            }
        }
    }
    field
}

/// One-dimensional squared-distance transform: out[q] = min_p (q - p)^2 + f[p].
///
/// Lower envelope of parabolas; z[0] = -inf guarantees the pop loop stops
/// at k = 0 because the finite FAR sentinel keeps every intersection finite.
fn dt1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n]; // parabola apex positions
    let mut z = vec![0.0f64; n + 1]; // envelope breakpoints
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| -> f64 {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64)
    };
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        out[q] = dq * dq + f[v[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::CubePlacement;
    use crate::rng::XorShift64Star;

    #[test]
    fn dt1d_matches_brute_force() {
        let mut rng = XorShift64Star::new(9);
        for _ in 0..200 {
            let n = 1 + rng.below(12) as usize;
            let f: Vec<f64> =
                (0..n).map(|_| if rng.below(3) == 0 { 0.0 } else { 1e20 }).collect();
            let mut out = vec![0.0; n];
            dt1d(&f, &mut out);
            for q in 0..n {
                let brute = (0..n)
                    .map(|p| (q as f64 - p as f64).powi(2) + f[p])
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    (out[q] - brute).abs() < 1e-6,
                    "n={n} q={q}: {} vs {}",
                    out[q],
                    brute
                );
            }
        }
    }

    #[test]
    fn edt_single_occupied_voxel() {
        let p = CubePlacement::new(1.0, 1.0, 5).unwrap();
        let mut bits = vec![false; p.voxel_count()];
        bits[p.linear_index(2, 2, 2)] = true;
        let occ = OccupancyGrid::new(p, bits).unwrap();
        let sdf = sdf_from_occupancy(&occ);
        let pitch = p.pitch();
        assert!((sdf.value(3, 2, 2) - pitch).abs() < 1e-12);
        assert!((sdf.value(2, 2, 1) - pitch).abs() < 1e-12);
        assert!((sdf.value(2, 4, 2) - 2.0 * pitch).abs() < 1e-12);
        assert!((sdf.value(3, 3, 2) - (2.0f64).sqrt() * pitch).abs() < 1e-12);
        // The occupied voxel itself is one pitch from the nearest empty.
        assert!((sdf.value(2, 2, 2) + pitch).abs() < 1e-12);
    }

    #[test]
    fn edt_half_space_hand_enumeration() {
        // R=4, occupied k in {0,1}: values per k are (-2, -1, +1, +2) * pitch.
        let p = CubePlacement::new(1.0, 1.0, 4).unwrap();
        let mut bits = vec![false; p.voxel_count()];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..2 {
                    bits[p.linear_index(i, j, k)] = true;
                }
            }
        }
        let occ = OccupancyGrid::new(p, bits).unwrap();
        let sdf = sdf_from_occupancy(&occ);
        let pitch = p.pitch();
        let expect = [-2.0, -1.0, 1.0, 2.0];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    let got = sdf.value(i, j, k);
                    assert!(
                        (got - expect[k as usize] * pitch).abs() < 1e-12,
                        "({i},{j},{k}): {got}"
                    );
                }
            }
        }
    }

    #[test]
    fn edt_uniform_grids_saturate() {
        let p = CubePlacement::new(1.0, 2.0, 3).unwrap();
        let bound = 2.0 * 3.0f64.sqrt();
        let empty = OccupancyGrid::new(p, vec![false; p.voxel_count()]).unwrap();
        assert!(sdf_from_occupancy(&empty).values.iter().all(|&v| v == bound));
        let full = OccupancyGrid::new(p, vec![true; p.voxel_count()]).unwrap();
        assert!(sdf_from_occupancy(&full).values.iter().all(|&v| v == -bound));
    }

    #[test]
    fn occupancy_round_trip_through_edt() {
        let p = CubePlacement::new(0.8, 1.0, 6).unwrap();
        let mut rng = XorShift64Star::new(21);
        for _ in 0..20 {
            let bits: Vec<bool> = (0..p.voxel_count()).map(|_| rng.below(2) == 1).collect();
            let occ = OccupancyGrid::new(p, bits).unwrap();
            let back = occupancy_from_sdf(&sdf_from_occupancy(&occ), 0.0);
            assert_eq!(occ.bits, back.bits);
        }
    }

    #[test]
    fn occupancy_threshold_edges() {
        let p = CubePlacement::new(1.0, 1.0, 3).unwrap();
        let sdf = SdfGrid::new(p, vec![0.5; p.voxel_count()]).unwrap();
        assert_eq!(occupancy_from_sdf(&sdf, 0.0).occupied_count(), 0);
        assert_eq!(occupancy_from_sdf(&sdf, f64::INFINITY).occupied_count(), 27);
    }

    #[test]
    fn mesh_validation_catches_bad_input() {
        let mut mesh = TriMesh {
            vertices: vec![
                Vector3::zeros(),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            triangles: vec![[0, 1, 2]],
        };
        assert!(mesh.validate().is_ok());
        mesh.triangles.push([0, 1, 3]);
        assert!(mesh.validate().is_err());
        mesh.triangles.pop();
        mesh.triangles.push([0, 0, 1]);
        assert!(mesh.validate().is_err());
    }

    fn unit_box() -> TriMesh {
        crate::synth::box_mesh(&Vector3::new(0.0, 0.0, 0.0), &Vector3::new(0.5, 0.5, 0.5))
    }

    #[test]
    fn winding_number_box() {
        let mesh = unit_box();
        assert!((winding_number(&mesh, &Vector3::new(0.0, 0.0, 0.0)) - 1.0).abs() < 1e-9);
        assert!(winding_number(&mesh, &Vector3::new(2.0, 0.0, 0.0)).abs() < 1e-9);
        // Flipping every triangle negates the winding number.
        let mut flipped = mesh.clone();
        for t in &mut flipped.triangles {
            t.swap(0, 1);
        }
        assert!((winding_number(&flipped, &Vector3::new(0.0, 0.0, 0.0)) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn closest_point_regions() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(1.0, 0.0, 0.0);
        let c = Vector3::new(0.0, 1.0, 0.0);
        // Interior projection.
        let q = closest_point_on_triangle(&Vector3::new(0.2, 0.2, 3.0), &a, &b, &c);
        assert!((q - Vector3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        // Vertex region.
        let q = closest_point_on_triangle(&Vector3::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert!((q - a).norm() < 1e-15);
        // Edge region.
        let q = closest_point_on_triangle(&Vector3::new(0.5, -2.0, 0.0), &a, &b, &c);
        assert!((q - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        // Hypotenuse region.
        let q = closest_point_on_triangle(&Vector3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((q - Vector3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn voxelize_box_matches_analytic_distance_outside() {
        // Axis-aligned box of half extents 0.25 at the cube center.
        let p = CubePlacement::new(1.0, 1.0, 16).unwrap();
        let center = Vector3::new(0.0, 0.0, 1.0);
        let mesh = crate::synth::box_mesh(&center, &Vector3::new(0.25, 0.25, 0.25));
        let sdf = voxelize_sdf(&mesh, &p).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                for k in 0..16 {
                    let q = p.voxel_center(i, j, k).unwrap() - center;
                    let d = Vector3::new(
                        (q.x.abs() - 0.25).max(0.0),
                        (q.y.abs() - 0.25).max(0.0),
                        (q.z.abs() - 0.25).max(0.0),
                    )
                    .norm();
                    if d > 1e-9 {
                        // Strictly outside: exact analytic box distance.
                        assert!(
                            (sdf.value(i, j, k) - d).abs() < 1e-9,
                            "({i},{j},{k}): {} vs {}",
                            sdf.value(i, j, k),
                            d
                        );
                    } else {
                        assert!(sdf.value(i, j, k) <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn voxelize_sign_is_orientation_tolerant() {
        let p = CubePlacement::new(1.0, 1.0, 8).unwrap();
        let center = Vector3::new(0.0, 0.0, 1.0);
        let mesh = crate::synth::box_mesh(&center, &Vector3::new(0.3, 0.3, 0.3));
        let mut flipped = mesh.clone();
        for t in &mut flipped.triangles {
            t.swap(0, 1);
        }
        let a = voxelize_sdf(&mesh, &p).unwrap();
        let b = voxelize_sdf(&flipped, &p).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn voxelize_rejects_empty_mesh() {
        let p = CubePlacement::new(1.0, 1.0, 4).unwrap();
        assert!(matches!(voxelize_sdf(&TriMesh::default(), &p), Err(Error::EmptyMesh)));
    }
}
