//! Fidelity metrics: normal-map comparison (IoU, PSNR, SSIM, angular
//! statistics) and point-cloud geometry (Chamfer distance, exact EMD,
//! F-score).

pub mod assignment;
pub mod raster;

pub use raster::{render_depth, render_normals, DepthMap, NormalMap};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::volume::TriMesh;

/// Angular accuracy thresholds in degrees.
pub const ACCURACY_THRESHOLDS_DEG: [f64; 3] = [11.25, 22.5, 30.0];
/// Default half-width of the silhouette boundary band, in pixels.
pub const DEFAULT_BOUNDARY_WIDTH: u32 = 5;
/// Default F-score distance threshold, in normalized world units.
pub const DEFAULT_TAU: f64 = 0.02;
/// Default surface sample count for Chamfer distance and F-score.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Largest cloud size accepted by the exact EMD matcher.
pub const DEFAULT_EMD_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite())) {
            return Err(Error::InvalidArgument("point cloud has non-finite coordinates".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Metrics defined on the pred/gt overlap region; absent when the valid
/// masks do not intersect.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMetrics {
    /// Peak 1 PSNR of the (n+1)/2 encoding; +inf for identical normals.
    pub psnr: f64,
    pub ssim: f64,
    pub mean_deg: f64,
    pub median_deg: f64,
    /// Mean error within the silhouette boundary band; absent when the
    /// band misses the overlap region.
    pub mean_b_deg: Option<f64>,
    /// Percentages of pixels with error <= 11.25, 22.5 and 30 degrees.
    pub acc_11_25: f64,
    pub acc_22_5: f64,
    pub acc_30: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalMetrics {
    /// 100 * |pred AND gt| / |pred OR gt|; 100 when both masks are empty.
    pub iou: f64,
    pub intersection_pixels: usize,
    pub union_pixels: usize,
    pub overlap: Option<OverlapMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoMetrics {
    /// Sum of the two directed mean squared nearest-neighbor distances.
    pub cd: f64,
    /// Mean matched distance under the exact optimal perfect matching.
    pub emd: f64,
    /// 200 * P * R / (P + R), in percent.
    pub fscore: f64,
    pub tau: f64,
}

/// Pixels of the gt valid mask within Chebyshev distance `width` of its
/// silhouette edge (a valid pixel bordering an invalid or out-of-image
/// pixel across the 8-neighborhood).
fn boundary_band(valid: &[bool], w: usize, h: usize, width: u32) -> Vec<bool> {
    let at = |x: i64, y: i64| -> bool {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            false
        } else {
            valid[y as usize * w + x as usize]
        }
    };
    let mut band = vec![false; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !at(x, y) {
                continue;
            }
            'neigh: for dy in -1..=1 {
                for dx in -1..=1 {
                    if (dx != 0 || dy != 0) && !at(x + dx, y + dy) {
                        band[y as usize * w + x as usize] = true;
                        break 'neigh;
                    }
                }
            }
        }
    }
    // Chebyshev dilation, one ring per step.
    for _ in 0..width {
        let prev = band.clone();
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                if prev[y as usize * w + x as usize] {
                    continue;
                }
                'n2: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx >= 0
                            && ny >= 0
                            && nx < w as i64
                            && ny < h as i64
                            && prev[ny as usize * w + nx as usize]
                        {
                            band[y as usize * w + x as usize] = true;
                            break 'n2;
                        }
                    }
                }
            }
        }
    }
    band
}

const SSIM_WINDOW: i64 = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn ssim_weights() -> Vec<f64> {
    let half = SSIM_WINDOW / 2;
    let mut weights = Vec::with_capacity((SSIM_WINDOW * SSIM_WINDOW) as usize);
    for dy in -half..=half {
        for dx in -half..=half {
            let r2 = (dx * dx + dy * dy) as f64;
            weights.push((-r2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    weights
}

/// Masked SSIM of the (n+1)/2-encoded normals over the intersection mask:
/// Gaussian-weighted window statistics use only intersection pixels (the
/// weights renormalize per window), evaluated per channel and averaged.
fn masked_ssim(pred: &NormalMap, gt: &NormalMap, mask: &[bool]) -> f64 {
    let w = pred.width as i64;
    let h = pred.height as i64;
    let weights = ssim_weights();
    let half = SSIM_WINDOW / 2;
    let encode = |n: f64| (n + 1.0) / 2.0;

    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            let pix = (y * w + x) as usize;
            if !mask[pix] {
                continue;
            }
            let mut pixel_ssim = 0.0;
            for c in 0..3 {
                let mut wsum = 0.0;
                let (mut mx, mut my) = (0.0, 0.0);
                let (mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0);
                for dy in -half..=half {
                    for dx in -half..=half {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let q = (ny * w + nx) as usize;
                        if !mask[q] {
                            continue;
                        }
                        let wt = weights[((dy + half) * SSIM_WINDOW + (dx + half)) as usize];
                        let a = encode(pred.normals[q][c]);
                        let b = encode(gt.normals[q][c]);
                        wsum += wt;
                        mx += wt * a;
                        my += wt * b;
                        mxx += wt * a * a;
                        myy += wt * b * b;
                        mxy += wt * a * b;
                    }
                }
                mx /= wsum;
                my /= wsum;
                let vx = mxx / wsum - mx * mx;
                let vy = myy / wsum - my * my;
                let cov = mxy / wsum - mx * my;
                pixel_ssim += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            }
            total += pixel_ssim / 3.0;
            count += 1;
        }
    }
    total / count as f64
}

/// Compares a predicted normal map against ground truth over their valid
/// masks. The angular, PSNR and SSIM statistics are computed only on the
/// intersection region.
pub fn normal_metrics(
    pred: &NormalMap,
    gt: &NormalMap,
    boundary_width: u32,
) -> Result<NormalMetrics> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::ShapeMismatch(format!(
            "normal maps are {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let w = pred.width as usize;
    let h = pred.height as usize;
    let n = w * h;

    let mut inter = vec![false; n];
    let mut inter_count = 0usize;
    let mut union_count = 0usize;
    for i in 0..n {
        let (a, b) = (pred.valid[i], gt.valid[i]);
        if a && b {
            inter[i] = true;
            inter_count += 1;
        }
        if a || b {
            union_count += 1;
        }
    }
    let iou = if union_count == 0 {
        100.0
    } else {
        100.0 * inter_count as f64 / union_count as f64
    };
    if inter_count == 0 {
        return Ok(NormalMetrics {
            iou,
            intersection_pixels: 0,
            union_pixels: union_count,
            overlap: None,
        });
    }

    // Per-pixel angular errors over the intersection, row-major.
    let mut errors = Vec::with_capacity(inter_count);
    let mut mse_sum = 0.0;
    for i in 0..n {
        if !inter[i] {
            continue;
        }
        let p = pred.normals[i];
        let g = gt.normals[i];
        let dot = (p[0] * g[0] + p[1] * g[1] + p[2] * g[2]).clamp(-1.0, 1.0);
        errors.push(dot.acos().to_degrees());
        for c in 0..3 {
            let diff = (p[c] + 1.0) / 2.0 - (g[c] + 1.0) / 2.0;
            mse_sum += diff * diff;
        }
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let mut sorted = errors.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let acc = |threshold: f64| {
        100.0 * errors.iter().filter(|&&e| e <= threshold).count() as f64 / errors.len() as f64
    };

    let band = boundary_band(&gt.valid, w, h, boundary_width);
    let mut b_sum = 0.0;
    let mut b_count = 0usize;
    let mut err_iter = errors.iter();
    for i in 0..n {
        if !inter[i] {
            continue;
        }
        let e = *err_iter.next().unwrap();
        if band[i] {
            b_sum += e;
            b_count += 1;
        }
    }
    let mean_b = if b_count > 0 { Some(b_sum / b_count as f64) } else { None };

    let mse = mse_sum / (3.0 * inter_count as f64);
    let psnr = if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() };
    let ssim = masked_ssim(pred, gt, &inter);

    Ok(NormalMetrics {
        iou,
        intersection_pixels: inter_count,
        union_pixels: union_count,
        overlap: Some(OverlapMetrics {
            psnr,
            ssim,
            mean_deg: mean,
            median_deg: median,
            mean_b_deg: mean_b,
            acc_11_25: acc(ACCURACY_THRESHOLDS_DEG[0]),
            acc_22_5: acc(ACCURACY_THRESHOLDS_DEG[1]),
            acc_30: acc(ACCURACY_THRESHOLDS_DEG[2]),
        }),
    })
}

/// Area-weighted uniform surface sampling; deterministic for a fixed seed.
/// Draw order per sample: area position, then the two barycentric draws.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 1 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroAreaMesh);
    }

    let mut rng = XorShift64Star::new(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.next_f64() * total;
        let t = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle_vertices(t);
        let mut r1 = rng.next_f64();
        let mut r2 = rng.next_f64();
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        points.push(a + (b - a) * r1 + (c - a) * r2);
    }
    Ok(PointCloud { points })
}

fn min_sqdist(p: &Vector3<f64>, cloud: &[Vector3<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for q in cloud {
        let d2 = (p - q).norm_squared();
        if d2 < best {
            best = d2;
        }
    }
    best
}

fn directed_sqdists(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Vec<f64> {
    a.par_iter().map(|p| min_sqdist(p, b)).collect()
}

/// Chamfer distance: sum of the two directed mean squared nearest-neighbor
/// distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let da = directed_sqdists(&a.points, &b.points);
    let db = directed_sqdists(&b.points, &a.points);
    let mean_a = da.iter().sum::<f64>() / da.len() as f64;
    let mean_b = db.iter().sum::<f64>() / db.len() as f64;
    Ok(mean_a + mean_b)
}

/// Exact Earth Mover's Distance between equal-size clouds: the mean
/// Euclidean distance of the optimal perfect matching.
pub fn emd(a: &PointCloud, b: &PointCloud, cap: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if a.len() != b.len() {
        return Err(Error::CloudSizeMismatch { a: a.len(), b: b.len() });
    }
    if a.len() > cap {
        return Err(Error::OverMatchingCap { size: a.len(), cap });
    }
    let n = a.len();
    let mut cost = vec![0.0f64; n * n];
    for (i, p) in a.points.iter().enumerate() {
        for (j, q) in b.points.iter().enumerate() {
            cost[i * n + j] = (p - q).norm();
        }
    }
    let assign = assignment::min_cost_assignment(&cost, n);
    Ok(assignment::assignment_cost(&cost, n, &assign) / n as f64)
}

/// F-score at threshold `tau`: harmonic mean (in percent) of the fraction
/// of `a` within `tau` of `b` (precision) and vice versa (recall).
pub fn fscore(a: &PointCloud, b: &PointCloud, tau: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let t2 = tau * tau;
    let da = directed_sqdists(&a.points, &b.points);
    let db = directed_sqdists(&b.points, &a.points);
    let precision = da.iter().filter(|&&d| d <= t2).count() as f64 / da.len() as f64;
    let recall = db.iter().filter(|&&d| d <= t2).count() as f64 / db.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(200.0 * precision * recall / (precision + recall))
}
