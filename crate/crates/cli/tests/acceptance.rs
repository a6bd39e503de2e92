//! Acceptance suite: one test per criterion, each printing a pass line
//! with its runtime against the pinned bound.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::Vector3;
use voxlift_core::camera::{fov_to_intrinsics, project, unproject, Pose};
use voxlift_core::eval::{
    chamfer, emd, fscore, normal_metrics, sample_surface, NormalMap, PointCloud,
};
use voxlift_core::hullgen::{carve, generate_mesh, MaskView};
use voxlift_core::lift::{fuse_views, lift_single, FeatureMap, FeaturePyramid, ViewInput};
use voxlift_core::placement::{auto_place, CubePlacement};
use voxlift_core::pxt::Tensor;
use voxlift_core::rng::XorShift64Star;
use voxlift_core::scene::{align_object, AlignOptions, GlobalPointMap, SceneObject};
use voxlift_core::synth::{self, icosphere, ShapeKind, SyntheticCase};
use voxlift_core::volume::{marching_cubes, voxelize_sdf, SdfGrid};

fn pass(criterion: u32, what: &str, start: Instant, bound_secs: f64) {
    let secs = start.elapsed().as_secs_f64();
    assert!(
        secs < bound_secs,
        "criterion {criterion} exceeded its time bound: {secs:.2}s >= {bound_secs}s"
    );
    println!("[PASS] criterion {criterion}: {what} ({secs:.2}s < {bound_secs}s)");
}

#[test]
fn criterion_01_auto_placement_corner_rays() {
    let start = Instant::now();
    let s = 1.0;
    for fov in [20.0, 30.0, 40.0, 60.0, 90.0] {
        let p = auto_place(fov, s, 64).unwrap();
        let intr = fov_to_intrinsics(fov, 512, 512).unwrap();
        let (w, h) = (intr.width as f64, intr.height as f64);
        for (u, v) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
            let ray = unproject(u, v, &intr);
            let vertex = Vector3::new(
                if u == 0.0 { -s / 2.0 } else { s / 2.0 },
                if v == 0.0 { -s / 2.0 } else { s / 2.0 },
                p.d + s / 2.0,
            );
            let along = vertex.dot(&ray.direction);
            let dist = (vertex - ray.direction * along).norm();
            assert!(dist < 1e-9, "fov {fov}, corner ({u},{v}): distance {dist}");
        }
    }
    pass(1, "corner rays hit back-face vertices within 1e-9 for all fovs", start, 1.0);
}

#[test]
fn criterion_02_projection_round_trip() {
    let start = Instant::now();
    let intr = fov_to_intrinsics(47.0, 640, 640).unwrap();
    let mut rng = XorShift64Star::new(1);
    let depths = [0.1, 1.0, 10.0];
    for i in 0..100_000 {
        let u = rng.range_f64(0.0, 640.0);
        let v = rng.range_f64(0.0, 640.0);
        let t = depths[i % 3] * rng.range_f64(0.5, 2.0);
        let ray = unproject(u, v, &intr);
        let p = ray.direction * t;
        let (pu, pv, _) = project(&p, &intr).unwrap();
        assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9, "pixel ({u},{v}) depth {t}");
    }
    pass(2, "100k random pixel/depth pairs reproject within 1e-9", start, 1.0);
}

/// Compact scalar reference for fuse (same pinned arithmetic, independent
/// code path).
mod naive {
    use nalgebra::Vector3;
    use voxlift_core::camera::Pose;
    use voxlift_core::lift::{FeatureMap, ViewInput};
    use voxlift_core::placement::CubePlacement;

    fn sample(map: &FeatureMap, u: f64, v: f64, fw: u32, fh: u32, out: &mut [f64]) {
        let ul = u * (map.width as f64 / fw as f64);
        let vl = v * (map.height as f64 / fh as f64);
        let (x, y) = (ul - 0.5, vl - 0.5);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let cl = |t: f64, hi: u32| (t as i64).clamp(0, hi as i64 - 1) as usize;
        let (ix0, ix1) = (cl(x0, map.width), cl(x0 + 1.0, map.width));
        let (iy0, iy1) = (cl(y0, map.height), cl(y0 + 1.0, map.height));
        let c = map.channels as usize;
        let w = map.width as usize;
        let tx = |xx: usize, yy: usize, ch: usize| map.data[(yy * w + xx) * c + ch] as f64;
        for ch in 0..c {
            let top = tx(ix0, iy0, ch) + fx * (tx(ix1, iy0, ch) - tx(ix0, iy0, ch));
            let bot = tx(ix0, iy1, ch) + fx * (tx(ix1, iy1, ch) - tx(ix0, iy1, ch));
            out[ch] += top + fy * (bot - top);
        }
    }

    pub fn fuse(
        views: &[ViewInput],
        reference: usize,
        p: &CubePlacement,
    ) -> (Vec<f64>, Vec<bool>, Vec<u32>) {
        let r = p.resolution as usize;
        let c = views[0].pyramid.channels() as usize;
        let transforms: Vec<Option<Pose>> = (0..views.len())
            .map(|i| {
                (i != reference)
                    .then(|| views[i].pose.invert().compose(&views[reference].pose))
            })
            .collect();
        let mut data = vec![0.0f64; r * r * r * c];
        let mut valid = vec![false; r * r * r];
        let mut counts = vec![0u32; r * r * r];
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    let coord = |idx: usize| ((idx as f64 + 0.5) / r as f64 - 0.5) * p.s;
                    let center = Vector3::new(coord(i), coord(j), coord(k) + p.d);
                    let voxel = (i * r + j) * r + k;
                    let mut hits = 0u32;
                    for (view, tf) in views.iter().zip(transforms.iter()) {
                        let q = match tf {
                            None => center,
                            Some(t) => t.rotation * center + t.translation,
                        };
                        if q.z <= 1e-6 {
                            continue;
                        }
                        let intr = &view.intrinsics;
                        let u = intr.fx * q.x / q.z + intr.cx;
                        let v = intr.fy * q.y / q.z + intr.cy;
                        if !(u >= 0.0
                            && u < intr.width as f64
                            && v >= 0.0
                            && v < intr.height as f64)
                        {
                            continue;
                        }
                        let mut feat = vec![0.0f64; c];
                        for level in &view.pyramid.levels {
                            sample(
                                level,
                                u,
                                v,
                                view.pyramid.full_width,
                                view.pyramid.full_height,
                                &mut feat,
                            );
                        }
                        let nl = view.pyramid.levels.len() as f64;
                        for ch in 0..c {
                            data[voxel * c + ch] += feat[ch] / nl;
                        }
                        hits += 1;
                    }
                    if hits > 0 {
                        for ch in 0..c {
                            data[voxel * c + ch] /= hits as f64;
                        }
                    }
                    valid[voxel] = hits > 0;
                    counts[voxel] = hits;
                }
            }
        }
        (data, valid, counts)
    }
}

fn random_view(rng: &mut XorShift64Star, levels: usize, channels: u32) -> ViewInput {
    let size = 4 + rng.below(13) as u32;
    let maps = (0..levels)
        .map(|_| {
            let w = 2 + rng.below(15) as u32;
            let h = 2 + rng.below(15) as u32;
            let data: Vec<f32> = (0..(w * h * channels) as usize)
                .map(|_| rng.range_f64(-2.0, 2.0) as f32)
                .collect();
            FeatureMap::new(h, w, channels, data).unwrap()
        })
        .collect();
    let pyramid = FeaturePyramid::new(maps, size, size).unwrap();
    let intr = fov_to_intrinsics(rng.range_f64(30.0, 80.0), size, size).unwrap();
    let center = Vector3::new(0.0, 0.0, 1.0);
    let az = rng.range_f64(0.0, std::f64::consts::TAU);
    let el = rng.range_f64(-1.0, 1.0);
    let dist = rng.range_f64(0.8, 2.5);
    let eye = center
        + Vector3::new(dist * el.cos() * az.sin(), dist * el.sin(), -dist * el.cos() * az.cos());
    let pose = synth::look_at_pose(&eye, &center).unwrap();
    ViewInput::new(pyramid, intr, pose).unwrap()
}

#[test]
fn criterion_03_lift_oracle_bitwise() {
    let start = Instant::now();
    let mut rng = XorShift64Star::new(2024);
    for case in 0..50 {
        let r = 2 + rng.below(7) as u32;
        // Cubes may straddle the camera plane; behind-camera voxels are
        // part of the bitwise comparison.
        let p = CubePlacement::new(rng.range_f64(-0.4, 1.8), 1.0, r).unwrap();
        let channels = 1 + rng.below(3) as u32;
        let n_views = 1 + rng.below(3) as usize;
        let views: Vec<ViewInput> = (0..n_views)
            .map(|_| {
                let levels = 1 + rng.below(3) as usize;
                random_view(&mut rng, levels, channels)
            })
            .collect();
        let reference = rng.below(n_views as u64) as usize;
        let fast = fuse_views(&views, reference, &p).unwrap();
        let (data, valid, counts) = naive::fuse(&views, reference, &p);
        assert_eq!(fast.valid, valid, "case {case}");
        assert_eq!(fast.view_count, counts, "case {case}");
        for (a, b) in fast.data.iter().zip(data.iter()) {
            assert_eq!(a.to_bits(), b.to_bits(), "case {case}: {a} vs {b}");
        }
        if n_views == 1 {
            let single = lift_single(&views[0], &p).unwrap();
            for (a, b) in single.data.iter().zip(fast.data.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
    // Permutation of the non-reference views.
    for _ in 0..10 {
        let p = CubePlacement::new(1.0, 1.0, 4).unwrap();
        let views: Vec<ViewInput> = (0..3).map(|_| random_view(&mut rng, 2, 2)).collect();
        let base = fuse_views(&views, 0, &p).unwrap();
        let swapped = vec![views[0].clone(), views[2].clone(), views[1].clone()];
        let perm = fuse_views(&swapped, 0, &p).unwrap();
        assert_eq!(base.valid, perm.valid);
        for (a, b) in base.data.iter().zip(perm.data.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
    pass(3, "50 random lift/fuse cases bitwise vs naive; permutation invariant", start, 10.0);
}

#[test]
fn criterion_04_multiscale_reduction() {
    let start = Instant::now();
    let mut rng = XorShift64Star::new(77);
    let data: Vec<f32> = (0..12 * 12 * 2).map(|_| rng.range_f64(-3.0, 3.0) as f32).collect();
    let map = FeatureMap::new(12, 12, 2, data).unwrap();
    let intr = fov_to_intrinsics(50.0, 12, 12).unwrap();
    let p = auto_place(50.0, 1.0, 6).unwrap();
    let single = lift_single(
        &ViewInput::new(
            FeaturePyramid::new(vec![map.clone()], 12, 12).unwrap(),
            intr,
            Pose::identity(),
        )
        .unwrap(),
        &p,
    )
    .unwrap();
    let double = lift_single(
        &ViewInput::new(
            FeaturePyramid::new(vec![map.clone(), map.clone()], 12, 12).unwrap(),
            intr,
            Pose::identity(),
        )
        .unwrap(),
        &p,
    )
    .unwrap();
    for (a, b) in single.data.iter().zip(double.data.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    // Constant map fills every valid voxel with exactly the constant.
    let constant = 0.37f32;
    let cmap = FeatureMap::new(9, 9, 1, vec![constant; 81]).unwrap();
    let cintr = fov_to_intrinsics(60.0, 9, 9).unwrap();
    let cvol = lift_single(
        &ViewInput::new(
            FeaturePyramid::new(vec![cmap], 9, 9).unwrap(),
            cintr,
            Pose::identity(),
        )
        .unwrap(),
        &auto_place(60.0, 1.0, 8).unwrap(),
    )
    .unwrap();
    let mut any = false;
    for v in 0..cvol.valid.len() {
        if cvol.valid[v] {
            assert_eq!(cvol.data[v], constant as f64);
            any = true;
        } else {
            assert_eq!(cvol.data[v], 0.0);
        }
    }
    assert!(any);
    pass(4, "identical-level pyramids reduce bitwise; constant fill exact", start, 1.0);
}

#[test]
fn criterion_05_marching_cubes_and_sdf() {
    let start = Instant::now();
    // Analytic sphere, R = 64.
    let p = CubePlacement::new(1.0, 1.0, 64).unwrap();
    let center = Vector3::new(0.0, 0.0, 1.0);
    let radius = 0.3;
    let mut values = Vec::with_capacity(p.voxel_count());
    for i in 0..64 {
        for j in 0..64 {
            for k in 0..64 {
                values.push((p.voxel_center_unchecked(i, j, k) - center).norm() - radius);
            }
        }
    }
    let grid = SdfGrid::new(p, values).unwrap();
    let mesh = marching_cubes(&grid, 0.0).unwrap();

    let mut census: std::collections::HashMap<(u32, u32), u32> = std::collections::HashMap::new();
    for t in &mesh.triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *census.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    assert!(census.values().all(|&c| c == 2), "not a closed 2-manifold");
    let euler =
        mesh.vertices.len() as i64 - census.len() as i64 + mesh.triangles.len() as i64;
    assert_eq!(euler, 2, "Euler characteristic {euler}");
    let area = mesh.surface_area();
    let expect = 4.0 * std::f64::consts::PI * radius * radius;
    assert!(
        (area - expect).abs() / expect < 0.02,
        "area {area} deviates more than 2% from {expect}"
    );

    // Icosphere voxelization against analytic distances at 1000 probes.
    let vp = CubePlacement::new(1.0, 1.0, 32).unwrap();
    let ico = icosphere(&center, radius, 3);
    let mut sagitta: f64 = 0.0;
    for t in 0..ico.triangles.len() {
        let [a, b, c] = ico.triangle_vertices(t);
        sagitta = sagitta.max(radius - ((a + b + c) / 3.0 - center).norm());
    }
    let sdf = voxelize_sdf(&ico, &vp).unwrap();
    let mut rng = XorShift64Star::new(9);
    for _ in 0..1000 {
        let (i, j, k) = (rng.below(32) as u32, rng.below(32) as u32, rng.below(32) as u32);
        let expect = (vp.voxel_center(i, j, k).unwrap() - center).norm() - radius;
        let got = sdf.value(i, j, k);
        assert!(
            (got - expect).abs() <= sagitta + 1e-12,
            "probe ({i},{j},{k}): {got} vs {expect}, sagitta {sagitta}"
        );
    }
    pass(5, "sphere extraction manifold + area 2%; icosphere SDF within sagitta", start, 30.0);
}

#[test]
fn criterion_06_toy_generator_end_to_end() {
    let start = Instant::now();
    let case = SyntheticCase {
        shape: ShapeKind::Sphere,
        size: 0.3,
        views: 6,
        image_size: 256,
        grid: 64,
        ..SyntheticCase::default()
    };
    let data = synth::generate(&case).unwrap();
    let views: Vec<MaskView> = data
        .views
        .iter()
        .map(|v| MaskView::new(v.mask.clone(), v.intrinsics, v.pose).unwrap())
        .collect();
    let center = Vector3::new(0.0, 0.0, data.placement.d);

    // Carved occupancy IoU against the analytic sphere.
    let occ = carve(&views, 0, &data.placement).unwrap();
    let mut inter = 0usize;
    let mut uni = 0usize;
    let mut idx = 0usize;
    for i in 0..64 {
        for j in 0..64 {
            for k in 0..64 {
                let inside = (data.placement.voxel_center_unchecked(i, j, k) - center).norm()
                    <= case.size;
                let carved = occ.bits[idx];
                idx += 1;
                if carved && inside {
                    inter += 1;
                }
                if carved || inside {
                    uni += 1;
                }
            }
        }
    }
    let iou = inter as f64 / uni as f64;
    assert!(iou >= 0.9, "carve IoU {iou} below 0.9");

    // Occupied count non-increasing as views grow 1 -> 6.
    let mut last = usize::MAX;
    for n in 1..=6 {
        let count = carve(&views[..n], 0, &data.placement).unwrap().occupied_count();
        assert!(count <= last, "count grew at {n} views: {count} > {last}");
        last = count;
    }

    // Generated mesh Chamfer within two voxel pitches of the sphere.
    let mesh = generate_mesh(&views, 0, &data.placement, 1).unwrap();
    let hull_pts = sample_surface(&mesh, 4000, 5).unwrap();
    let gt_pts = sample_surface(&icosphere(&center, case.size, 3), 4000, 6).unwrap();
    let directed = |from: &[Vector3<f64>], to: &[Vector3<f64>]| {
        let mut sum = 0.0;
        for q in from {
            let mut best = f64::INFINITY;
            for t in to {
                best = best.min((q - t).norm_squared());
            }
            sum += best.sqrt();
        }
        sum / from.len() as f64
    };
    let cd = directed(&hull_pts.points, &gt_pts.points)
        .max(directed(&gt_pts.points, &hull_pts.points));
    assert!(cd <= 2.0 * data.placement.pitch(), "chamfer {cd}");

    // Reference-view silhouette IoU.
    let depth = voxlift_core::eval::render_depth(
        &mesh,
        &data.views[0].intrinsics,
        &Pose::identity(),
    )
    .unwrap();
    let mut inter = 0usize;
    let mut uni = 0usize;
    for (&got, &want) in depth.valid.iter().zip(data.views[0].mask.iter()) {
        if got && want {
            inter += 1;
        }
        if got || want {
            uni += 1;
        }
    }
    let sil = inter as f64 / uni as f64;
    assert!(sil >= 0.95, "silhouette IoU {sil}");
    pass(6, "6-view sphere: IoU >= 0.9, chamfer <= 2 pitch, monotone, silhouette >= 0.95", start, 60.0);
}

#[test]
fn criterion_07_normal_metrics() {
    let start = Instant::now();
    let mut rng = XorShift64Star::new(5);

    // Identity.
    let (w, h) = (48u32, 40u32);
    let mut normals = vec![[0.0f64; 3]; (w * h) as usize];
    let mut valid = vec![false; (w * h) as usize];
    for i in 0..normals.len() {
        if rng.next_f64() < 0.6 {
            let phi = rng.range_f64(0.0, std::f64::consts::TAU);
            let z = rng.range_f64(-1.0, 0.0);
            let r = (1.0 - z * z).sqrt();
            normals[i] = [r * phi.cos(), r * phi.sin(), z];
            valid[i] = true;
        }
    }
    let gt = NormalMap { width: w, height: h, normals: normals.clone(), valid: valid.clone() };
    let m = normal_metrics(&gt, &gt, 5).unwrap();
    assert_eq!(m.iou, 100.0);
    let o = m.overlap.as_ref().unwrap();
    assert!(o.mean_deg.abs() < 1e-6 && o.median_deg.abs() < 1e-6);
    assert_eq!((o.acc_11_25, o.acc_22_5, o.acc_30), (100.0, 100.0, 100.0));
    assert_eq!(o.psnr, f64::INFINITY);

    // Exact 10-degree rotation about the view axis of in-plane normals.
    let mut plane_normals = vec![[0.0f64; 3]; (w * h) as usize];
    for (i, &ok) in valid.iter().enumerate() {
        if ok {
            let phi = rng.range_f64(0.0, std::f64::consts::TAU);
            plane_normals[i] = [phi.cos(), phi.sin(), 0.0];
        }
    }
    let gt2 = NormalMap { width: w, height: h, normals: plane_normals.clone(), valid: valid.clone() };
    let ang = 10.0f64.to_radians();
    let rotated: Vec<[f64; 3]> = plane_normals
        .iter()
        .map(|n| {
            [ang.cos() * n[0] - ang.sin() * n[1], ang.sin() * n[0] + ang.cos() * n[1], 0.0]
        })
        .collect();
    let pred2 = NormalMap { width: w, height: h, normals: rotated, valid: valid.clone() };
    let m2 = normal_metrics(&pred2, &gt2, 5).unwrap();
    let o2 = m2.overlap.unwrap();
    assert!((o2.mean_deg - 10.0).abs() < 1e-6, "mean {}", o2.mean_deg);
    assert!((o2.median_deg - 10.0).abs() < 1e-6);
    assert_eq!(o2.acc_11_25, 100.0);
    assert_eq!(o2.acc_22_5, 100.0);

    // Randomized masks against a naive per-pixel recomputation of the
    // angular statistics.
    for _ in 0..4 {
        let make = |rng: &mut XorShift64Star| {
            let mut n = vec![[0.0f64; 3]; (w * h) as usize];
            let mut v = vec![false; (w * h) as usize];
            for i in 0..n.len() {
                if rng.next_f64() < 0.5 {
                    let phi = rng.range_f64(0.0, std::f64::consts::TAU);
                    let z = rng.range_f64(-1.0, 0.0);
                    let r = (1.0 - z * z).sqrt();
                    n[i] = [r * phi.cos(), r * phi.sin(), z];
                    v[i] = true;
                }
            }
            NormalMap { width: w, height: h, normals: n, valid: v }
        };
        let a = make(&mut rng);
        let b = make(&mut rng);
        let got = normal_metrics(&a, &b, 5).unwrap();
        let mut errs = Vec::new();
        let mut inter = 0;
        let mut uni = 0;
        for i in 0..(w * h) as usize {
            if a.valid[i] && b.valid[i] {
                inter += 1;
                let dot = (a.normals[i][0] * b.normals[i][0]
                    + a.normals[i][1] * b.normals[i][1]
                    + a.normals[i][2] * b.normals[i][2])
                    .clamp(-1.0, 1.0);
                errs.push(dot.acos().to_degrees());
            }
            if a.valid[i] || b.valid[i] {
                uni += 1;
            }
        }
        if inter == 0 {
            assert!(got.overlap.is_none());
            continue;
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        errs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median = if errs.len() % 2 == 1 {
            errs[errs.len() / 2]
        } else {
            (errs[errs.len() / 2 - 1] + errs[errs.len() / 2]) / 2.0
        };
        let acc = |t: f64| 100.0 * errs.iter().filter(|&&e| e <= t).count() as f64 / errs.len() as f64;
        assert!((got.iou - 100.0 * inter as f64 / uni as f64).abs() < 1e-9);
        let o = got.overlap.unwrap();
        assert!((o.mean_deg - mean).abs() < 1e-9);
        assert!((o.median_deg - median).abs() < 1e-9);
        assert!((o.acc_11_25 - acc(11.25)).abs() < 1e-9);
        assert!((o.acc_22_5 - acc(22.5)).abs() < 1e-9);
        assert!((o.acc_30 - acc(30.0)).abs() < 1e-9);
    }
    pass(7, "identity exact, 10-degree case exact, random masks match the reference", start, 5.0);
}

#[test]
fn criterion_08_geometric_metrics() {
    let start = Instant::now();
    let mut rng = XorShift64Star::new(3);
    let mk = |rng: &mut XorShift64Star, n: usize| {
        PointCloud::new(
            (0..n)
                .map(|_| Vector3::new(rng.next_f64(), rng.next_f64(), rng.next_f64()))
                .collect(),
        )
        .unwrap()
    };

    // Chamfer and F-score against O(n^2) brute force on 100 points.
    let a = mk(&mut rng, 100);
    let b = mk(&mut rng, 100);
    let mut fwd = 0.0;
    let mut bwd = 0.0;
    let tau = 0.2;
    let (mut pa, mut pb) = (0usize, 0usize);
    for p in &a.points {
        let d2 = b.points.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
        fwd += d2;
        if d2 <= tau * tau {
            pa += 1;
        }
    }
    for q in &b.points {
        let d2 = a.points.iter().map(|p| (q - p).norm_squared()).fold(f64::INFINITY, f64::min);
        bwd += d2;
        if d2 <= tau * tau {
            pb += 1;
        }
    }
    let cd_ref = fwd / 100.0 + bwd / 100.0;
    assert!((chamfer(&a, &b).unwrap() - cd_ref).abs() < 1e-12);
    let (p, r) = (pa as f64 / 100.0, pb as f64 / 100.0);
    let f_ref = if p + r == 0.0 { 0.0 } else { 200.0 * p * r / (p + r) };
    assert!((fscore(&a, &b, tau).unwrap() - f_ref).abs() < 1e-12);

    // Exact EMD against exhaustive permutations on 8 points.
    for _ in 0..10 {
        let x = mk(&mut rng, 8);
        let y = mk(&mut rng, 8);
        let got = emd(&x, &y, 1024).unwrap();
        let mut perm: Vec<usize> = (0..8).collect();
        let mut best = f64::INFINITY;
        fn walk(
            perm: &mut Vec<usize>,
            k: usize,
            x: &[Vector3<f64>],
            y: &[Vector3<f64>],
            best: &mut f64,
        ) {
            if k == perm.len() {
                let c: f64 = perm.iter().enumerate().map(|(i, &j)| (x[i] - y[j]).norm()).sum();
                *best = best.min(c);
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                walk(perm, k + 1, x, y, best);
                perm.swap(k, i);
            }
        }
        walk(&mut perm, 0, &x.points, &y.points, &mut best);
        assert!((got - best / 8.0).abs() < 1e-12);
    }

    // Identical clouds.
    assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    assert!(emd(&mk(&mut rng, 64), &mk(&mut rng, 0), 1024).is_err());
    let c = mk(&mut rng, 64);
    assert_eq!(emd(&c, &c, 1024).unwrap(), 0.0);
    assert_eq!(fscore(&c, &c, 0.02).unwrap(), 100.0);
    pass(8, "chamfer/fscore match brute force; emd matches exhaustive search", start, 30.0);
}

#[test]
fn criterion_09_scene_alignment() {
    let start = Instant::now();
    let fov = 40.0;
    let intr = fov_to_intrinsics(fov, 160, 160).unwrap();
    let placement = auto_place(fov, 1.0, 16).unwrap();
    let center = Vector3::new(0.0, 0.0, placement.d);
    let mesh = icosphere(&center, 0.28, 3);
    let depth =
        voxlift_core::eval::render_depth(&mesh, &intr, &Pose::identity()).unwrap();
    let map = GlobalPointMap::from_depth(&depth, &intr);
    let obj = SceneObject {
        id: "s".into(),
        mesh,
        visibility_mask: depth.valid.clone(),
        placement,
        intrinsics: intr,
    };
    let opts = AlignOptions::default();

    let res = align_object(&obj, &map, &opts).unwrap();
    assert!((res.alpha - 1.0).abs() <= 1e-9, "self alpha {}", res.alpha);

    let res = align_object(&obj, &map.scaled(2.5), &opts).unwrap();
    assert!((res.alpha - 2.5).abs() <= 1e-9, "scaled alpha {}", res.alpha);

    // Noisy case: sigma = 0.01 on >= 5000 pixels.
    let valid_count = map.valid.iter().filter(|&&v| v).count();
    assert!(valid_count >= 5000, "only {valid_count} constraint pixels");
    let mut rng = XorShift64Star::new(11);
    let gauss = |rng: &mut XorShift64Star| {
        let u1 = rng.next_f64().max(1e-300);
        let u2 = rng.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut noisy = map.scaled(2.5);
    for (p, &ok) in noisy.points.iter_mut().zip(noisy.valid.iter()) {
        if ok {
            *p += Vector3::new(
                0.01 * gauss(&mut rng),
                0.01 * gauss(&mut rng),
                0.01 * gauss(&mut rng),
            );
        }
    }
    let res = align_object(&obj, &noisy, &opts).unwrap();
    assert!((res.alpha - 2.5).abs() <= 0.01, "noisy alpha {}", res.alpha);

    // Optimality perturbation on 100 random instances.
    for _ in 0..100 {
        let n = 10 + rng.below(100) as usize;
        let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = (0..n)
            .map(|_| {
                let p = Vector3::new(
                    rng.range_f64(-1.0, 1.0),
                    rng.range_f64(-1.0, 1.0),
                    rng.range_f64(0.5, 2.0),
                );
                let q = p * rng.range_f64(0.5, 3.0)
                    + Vector3::new(
                        0.03 * gauss(&mut rng),
                        0.03 * gauss(&mut rng),
                        0.03 * gauss(&mut rng),
                    );
                (p, q)
            })
            .collect();
        let pq: f64 = pairs.iter().map(|(p, q)| p.dot(q)).sum();
        let pp: f64 = pairs.iter().map(|(p, _)| p.dot(p)).sum();
        let alpha = pq / pp;
        let f = |a: f64| pairs.iter().map(|(p, q)| (p * a - q).norm_squared()).sum::<f64>();
        assert!(f(alpha + 1e-4) >= f(alpha));
        assert!(f(alpha - 1e-4) >= f(alpha));
    }
    pass(9, "self 1 +/- 1e-9, scaled 2.5 +/- 1e-9, noisy 2.5 +/- 0.01, optimal", start, 10.0);
}

fn run_cli(args: &[&str], threads: usize) -> std::process::Output {
    let mut all: Vec<String> = vec!["--threads".into(), threads.to_string()];
    all.extend(args.iter().map(|s| s.to_string()));
    Command::new(env!("CARGO_BIN_EXE_voxlift"))
        .args(&all)
        .output()
        .expect("binary runs")
}

fn hash_tree(dir: &Path) -> Vec<(String, u64)> {
    let mut entries = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                let mut h = 1469598103934665603u64;
                for b in bytes {
                    h ^= b as u64;
                    h = h.wrapping_mul(1099511628211);
                }
                entries.push((
                    path.strip_prefix(dir).unwrap().to_string_lossy().into_owned(),
                    h,
                ));
            }
        }
    }
    entries.sort();
    entries
}

#[test]
fn criterion_10_formats_and_determinism() {
    let start = Instant::now();

    // PXT bitwise round trips, including zero-length dims.
    let mut rng = XorShift64Star::new(10);
    for _ in 0..20 {
        let dims: Vec<u64> = (0..1 + rng.below(4)).map(|_| rng.below(5)).collect();
        let count: u64 = dims.iter().product();
        let t = if rng.below(2) == 0 {
            Tensor::new_f32(
                dims,
                (0..count).map(|_| rng.range_f64(-1e6, 1e6) as f32).collect(),
            )
            .unwrap()
        } else {
            Tensor::new_u8(dims, (0..count).map(|_| rng.below(256) as u8).collect()).unwrap()
        };
        let bytes = t.to_bytes();
        assert_eq!(Tensor::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    // Every subcommand, run under --threads 1 and --threads 8, must
    // produce byte-identical outputs.
    let base = std::env::temp_dir().join(format!("voxlift-acc-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    for threads in [1usize, 8] {
        let root = base.join(format!("t{threads}"));
        std::fs::create_dir_all(&root).unwrap();
        let s = |p: &str| root.join(p).to_string_lossy().into_owned();

        let out = run_cli(
            &["synth", "--shape", "sphere", "--radius", "0.3", "--views", "3", "--grid", "12",
              "--size", "48", "--subdiv", "1", "--seed", "4", "-o", &s("synth")],
            threads,
        );
        assert!(out.status.success(), "synth: {}", String::from_utf8_lossy(&out.stderr));
        let d: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(root.join("synth/placement.json")).unwrap(),
        )
        .unwrap();
        let dist = d["d"].as_f64().unwrap().to_string();

        let place = run_cli(&["place", "--fov", "40", "--size", "64"], threads);
        assert!(place.status.success());
        std::fs::write(root.join("place.json"), &place.stdout).unwrap();

        // A small feature map for lift/fuse.
        let feat = Tensor::new_f32(
            vec![48, 48, 2],
            (0..48 * 48 * 2).map(|i| (i % 13) as f32 * 0.25).collect(),
        )
        .unwrap();
        feat.save(&root.join("feat.pxt")).unwrap();

        for (cmd, rest) in [
            ("lift", vec!["--features", &s("feat.pxt"), "--camera", &s("synth/cam_0.json"),
                          "--grid", "12", "--dist", &dist, "-o", &s("vol.pxt")]),
            ("fuse", vec!["--view", &format!("{}:{}", s("feat.pxt"), s("synth/cam_0.json")),
                          "--view", &format!("{}:{}", s("feat.pxt"), s("synth/cam_1.json")),
                          "--reference", "0", "--grid", "12", "--dist", &dist,
                          "-o", &s("fused.pxt")]),
            ("carve", vec!["--mask", &format!("{}:{}", s("synth/mask_0.pxt"), s("synth/cam_0.json")),
                           "--mask", &format!("{}:{}", s("synth/mask_1.pxt"), s("synth/cam_1.json")),
                           "--mask", &format!("{}:{}", s("synth/mask_2.pxt"), s("synth/cam_2.json")),
                           "--grid", "12", "--dist", &dist, "-o", &s("occ.pxt")]),
            ("genmesh", vec!["--mask", &format!("{}:{}", s("synth/mask_0.pxt"), s("synth/cam_0.json")),
                             "--mask", &format!("{}:{}", s("synth/mask_1.pxt"), s("synth/cam_1.json")),
                             "--mask", &format!("{}:{}", s("synth/mask_2.pxt"), s("synth/cam_2.json")),
                             "--grid", "12", "--dist", &dist, "-o", &s("hull.obj")]),
            ("voxelize", vec!["--mesh", &s("synth/gt_mesh.obj"), "--grid", "12",
                              "--dist", &dist, "-o", &s("sdf.pxt")]),
            ("mesh", vec!["--sdf", &s("sdf.pxt"), "-o", &s("remesh.obj")]),
            ("render-normals", vec!["--mesh", &s("synth/gt_mesh.obj"),
                                    "--camera", &s("synth/cam_1.json"), "-o", &s("n1.pxt")]),
            ("render-depth", vec!["--mesh", &s("synth/gt_mesh.obj"),
                                  "--camera", &s("synth/cam_1.json"), "-o", &s("d1.pxt")]),
            ("eval-normals", vec!["--pred", &s("n1.pxt"), "--gt", &s("synth/normals_1.pxt"),
                                  "-o", &s("nrep.json")]),
            ("eval-geo", vec!["--pred", &s("hull.obj"), "--gt", &s("synth/gt_mesh.obj"),
                              "--samples", "400", "--emd-cap", "128", "--seed", "6",
                              "-o", &s("grep.json")]),
            ("align-scene", vec!["--object", &format!("a:{}:{}", s("synth/gt_mesh.obj"), s("synth/mask_0.pxt")),
                                 "--camera", &s("synth/cam_0.json"),
                                 "--pointmap", &s("synth/pointmap.pxt"),
                                 "-o", &s("scene.obj"), "--report", &s("align.json")]),
        ] {
            let mut args = vec![cmd];
            args.extend(rest.iter().copied());
            let out = run_cli(&args, threads);
            assert!(
                out.status.success(),
                "{cmd} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
    }
    let a = hash_tree(&base.join("t1"));
    let b = hash_tree(&base.join("t8"));
    assert_eq!(a.len(), b.len());
    for ((pa, ha), (pb, hb)) in a.iter().zip(b.iter()) {
        assert_eq!(pa, pb);
        assert_eq!(ha, hb, "output {pa} differs between --threads 1 and --threads 8");
    }
    let _ = std::fs::remove_dir_all(&base);
    pass(10, "PXT round trips bitwise; all subcommands thread-count reproducible", start, 10.0);
}
