//! Subcommand implementations. Every handler finishes all fallible work
//! before its first write, so failure exits leave no files behind.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use voxlift_core::camera::{CameraDescriptor, CameraIntrinsics, Pose};
use voxlift_core::error::{Error, Result};
use voxlift_core::eval::{self, NormalMap};
use voxlift_core::hullgen::{self, MaskView};
use voxlift_core::lift::{self, FeatureMap, FeaturePyramid, ViewInput};
use voxlift_core::obj;
use voxlift_core::placement::{auto_place, CubePlacement, PlacementRecord, DEFAULT_FOV_DEG};
use voxlift_core::pxt::Tensor;
use voxlift_core::scene::{self, AlignOptions, GlobalPointMap, SceneObject};
use voxlift_core::synth;
use voxlift_core::volume::{marching_cubes, voxelize_sdf, SdfGrid};

use crate::{Command, PlacementArgs};

pub(crate) fn run(command: Command, seed: u64) -> Result<()> {
    match command {
        Command::Place { fov, scale, size } => place(fov, scale, size),
        Command::Lift { features, camera, grid, placement, output } => {
            lift_cmd(&features, &camera, grid, &placement, &output)
        }
        Command::Fuse { views, reference, grid, placement, output } => {
            fuse_cmd(&views, reference, grid, &placement, &output)
        }
        Command::Carve { masks, reference, grid, placement, output } => {
            carve_cmd(&masks, reference, grid, &placement, &output, None)
        }
        Command::Genmesh { masks, reference, grid, placement, smooth, output } => {
            carve_cmd(&masks, reference, grid, &placement, &output, Some(smooth))
        }
        Command::Voxelize { mesh, grid, placement, output } => {
            voxelize_cmd(&mesh, grid, &placement, &output)
        }
        Command::Mesh { sdf, iso, output } => mesh_cmd(&sdf, iso, &output),
        Command::RenderNormals { mesh, camera, output } => {
            render_cmd(&mesh, &camera, &output, true)
        }
        Command::RenderDepth { mesh, camera, output } => {
            render_cmd(&mesh, &camera, &output, false)
        }
        Command::EvalNormals { pred, gt, boundary_width, output } => {
            eval_normals_cmd(&pred, &gt, boundary_width, &output)
        }
        Command::EvalGeo { pred, gt, samples, tau, emd_cap, output } => {
            eval_geo_cmd(&pred, &gt, samples, tau, emd_cap, seed, &output)
        }
        Command::AlignScene {
            objects,
            camera,
            pointmap,
            min_support,
            trim,
            output,
            report,
        } => align_scene_cmd(&objects, &camera, &pointmap, min_support, trim, &output, &report),
        Command::Synth {
            shape,
            radius,
            box_half,
            minor,
            views,
            fov,
            size,
            grid,
            subdiv,
            output,
        } => synth_cmd(&shape, radius, box_half, minor, views, fov, size, grid, subdiv, seed, &output),
    }
}

fn resolve_placement(args: &PlacementArgs, grid: u32) -> Result<CubePlacement> {
    match args.dist {
        Some(d) => CubePlacement::new(d, args.scale, grid),
        None => auto_place(args.fov.unwrap_or(DEFAULT_FOV_DEG), args.scale, grid),
    }
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    output.with_file_name(name)
}

fn write_placement_sidecar(output: &Path, placement: CubePlacement) -> Result<()> {
    let record = PlacementRecord::from(placement);
    std::fs::write(sidecar_path(output), serde_json::to_string_pretty(&record)?)?;
    Ok(())
}

fn read_placement_sidecar(input: &Path) -> Result<CubePlacement> {
    let path = sidecar_path(input);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::Pxt(format!("cannot read placement sidecar {}: {e}", path.display()))
    })?;
    let record: PlacementRecord = serde_json::from_str(&text)?;
    record.try_into()
}

fn load_camera(path: &Path) -> Result<(CameraIntrinsics, Pose)> {
    let descr = CameraDescriptor::load(path)?;
    Ok((descr.intrinsics()?, descr.pose()?))
}

fn load_mask_tensor(path: &Path) -> Result<(Vec<bool>, u32, u32)> {
    let t = Tensor::load(path)?;
    let [h, w] = t.dims.as_slice() else {
        return Err(Error::Pxt(format!(
            "mask tensor must be H x W, got {:?} ({})",
            t.dims,
            path.display()
        )));
    };
    let bits = t.as_u8()?.iter().map(|&b| b != 0).collect();
    Ok((bits, *w as u32, *h as u32))
}

fn place(fov: f64, scale: f64, size: u32) -> Result<()> {
    let placement = auto_place(fov, scale, 1)?;
    let intr = voxlift_core::camera::fov_to_intrinsics(fov, size, size)?;
    let descr = CameraDescriptor::new(&intr, None);
    let doc = json!({
        "d": placement.d,
        "s": placement.s,
        "fov_deg": fov,
        "camera": serde_json::to_value(&descr)?,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn lift_cmd(
    features: &[PathBuf],
    camera: &Path,
    grid: u32,
    placement_args: &PlacementArgs,
    output: &Path,
) -> Result<()> {
    let placement = resolve_placement(placement_args, grid)?;
    let (intr, _) = load_camera(camera)?;
    let levels = features
        .iter()
        .map(|p| FeatureMap::from_tensor(&Tensor::load(p)?))
        .collect::<Result<Vec<_>>>()?;
    let pyramid = FeaturePyramid::new(levels, intr.width, intr.height)?;
    let view = ViewInput::new(pyramid, intr, Pose::identity())?;
    let volume = lift::lift_single(&view, &placement)?;
    volume.to_tensor().save(output)?;
    write_placement_sidecar(output, placement)
}

/// `feats.pxt[,more.pxt]:camera.json`
fn parse_view_spec(spec: &str) -> Result<(Vec<PathBuf>, PathBuf)> {
    let (feats, cam) = spec.rsplit_once(':').ok_or_else(|| {
        Error::InvalidArgument(format!(
            "view spec {spec:?} must be feats.pxt[,more.pxt]:camera.json"
        ))
    })?;
    let paths: Vec<PathBuf> = feats.split(',').map(PathBuf::from).collect();
    Ok((paths, PathBuf::from(cam)))
}

fn fuse_cmd(
    view_specs: &[String],
    reference: usize,
    grid: u32,
    placement_args: &PlacementArgs,
    output: &Path,
) -> Result<()> {
    let placement = resolve_placement(placement_args, grid)?;
    let mut views = Vec::with_capacity(view_specs.len());
    for spec in view_specs {
        let (feat_paths, cam_path) = parse_view_spec(spec)?;
        let (intr, pose) = load_camera(&cam_path)?;
        let levels = feat_paths
            .iter()
            .map(|p| FeatureMap::from_tensor(&Tensor::load(p)?))
            .collect::<Result<Vec<_>>>()?;
        let pyramid = FeaturePyramid::new(levels, intr.width, intr.height)?;
        views.push(ViewInput::new(pyramid, intr, pose)?);
    }
    let volume = lift::fuse_views(&views, reference, &placement)?;
    volume.to_tensor().save(output)?;
    write_placement_sidecar(output, placement)
}

fn load_mask_views(mask_specs: &[String]) -> Result<Vec<MaskView>> {
    let mut views = Vec::with_capacity(mask_specs.len());
    for spec in mask_specs {
        let (mask_path, cam_path) = spec.rsplit_once(':').ok_or_else(|| {
            Error::InvalidArgument(format!("mask spec {spec:?} must be mask.pxt:camera.json"))
        })?;
        let (bits, w, h) = load_mask_tensor(Path::new(mask_path))?;
        let (intr, pose) = load_camera(Path::new(cam_path))?;
        if (w, h) != (intr.width, intr.height) {
            return Err(Error::ShapeMismatch(format!(
                "mask {mask_path} is {w}x{h} but its camera is {}x{}",
                intr.width, intr.height
            )));
        }
        views.push(MaskView::new(bits, intr, pose)?);
    }
    Ok(views)
}

fn carve_cmd(
    mask_specs: &[String],
    reference: usize,
    grid: u32,
    placement_args: &PlacementArgs,
    output: &Path,
    mesh_smooth: Option<u32>,
) -> Result<()> {
    let placement = resolve_placement(placement_args, grid)?;
    let views = load_mask_views(mask_specs)?;
    match mesh_smooth {
        None => {
            let occ = hullgen::carve(&views, reference, &placement)?;
            occ.to_tensor().save(output)?;
            write_placement_sidecar(output, placement)
        }
        Some(smooth) => {
            let mesh = hullgen::generate_mesh(&views, reference, &placement, smooth)?;
            obj::save_obj(&mesh, output)
        }
    }
}

fn voxelize_cmd(
    mesh_path: &Path,
    grid: u32,
    placement_args: &PlacementArgs,
    output: &Path,
) -> Result<()> {
    let placement = resolve_placement(placement_args, grid)?;
    let mesh = obj::load_obj(mesh_path)?;
    let sdf = voxelize_sdf(&mesh, &placement)?;
    sdf.to_tensor().save(output)?;
    write_placement_sidecar(output, placement)
}

fn mesh_cmd(sdf_path: &Path, iso: f64, output: &Path) -> Result<()> {
    let placement = read_placement_sidecar(sdf_path)?;
    let tensor = Tensor::load(sdf_path)?;
    let sdf = SdfGrid::from_tensor(&tensor, placement)?;
    let mesh = marching_cubes(&sdf, iso)?;
    obj::save_obj(&mesh, output)
}

fn render_cmd(mesh_path: &Path, camera: &Path, output: &Path, normals: bool) -> Result<()> {
    let mesh = obj::load_obj(mesh_path)?;
    let (intr, pose) = load_camera(camera)?;
    let tensor = if normals {
        eval::render_normals(&mesh, &intr, &pose)?.to_tensor()
    } else {
        eval::render_depth(&mesh, &intr, &pose)?.to_tensor()
    };
    tensor.save(output)
}

/// JSON value for a possibly infinite metric: numbers stay numbers,
/// +inf becomes the string "inf".
fn finite_or_inf(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

fn eval_normals_cmd(pred: &Path, gt: &Path, boundary_width: u32, output: &Path) -> Result<()> {
    let pred_map = NormalMap::from_tensor(&Tensor::load(pred)?)?;
    let gt_map = NormalMap::from_tensor(&Tensor::load(gt)?)?;
    let m = eval::normal_metrics(&pred_map, &gt_map, boundary_width)?;
    let overlap = match &m.overlap {
        Some(o) => json!({
            "psnr": finite_or_inf(o.psnr),
            "ssim": o.ssim,
            "mean_deg": o.mean_deg,
            "median_deg": o.median_deg,
            "mean_b_deg": o.mean_b_deg,
            "acc_11_25": o.acc_11_25,
            "acc_22_5": o.acc_22_5,
            "acc_30": o.acc_30,
        }),
        None => Value::Null,
    };
    let doc = json!({
        "iou": m.iou,
        "intersection_pixels": m.intersection_pixels,
        "union_pixels": m.union_pixels,
        "overlap": overlap,
        "conventions": {
            "angular_thresholds_deg": eval::ACCURACY_THRESHOLDS_DEG,
            "boundary_width_px": boundary_width,
            "boundary_metric": "chebyshev distance to the gt silhouette edge",
            "encoding": "(n+1)/2 per channel, peak 1",
            "region": "intersection of the valid masks",
            "ssim": "11x11 gaussian window, sigma 1.5, masked renormalization",
        },
    });
    std::fs::write(output, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn eval_geo_cmd(
    pred: &Path,
    gt: &Path,
    samples: usize,
    tau: f64,
    emd_cap: usize,
    seed: u64,
    output: &Path,
) -> Result<()> {
    let pred_mesh = obj::load_obj(pred)?;
    let gt_mesh = obj::load_obj(gt)?;
    let pred_cloud = eval::sample_surface(&pred_mesh, samples, seed)?;
    let gt_cloud = eval::sample_surface(&gt_mesh, samples, seed)?;

    let emd_samples = samples.min(emd_cap);
    let emd_seed = seed.wrapping_add(1);
    let pred_small = eval::sample_surface(&pred_mesh, emd_samples, emd_seed)?;
    let gt_small = eval::sample_surface(&gt_mesh, emd_samples, emd_seed)?;

    let metrics = eval::GeoMetrics {
        cd: eval::chamfer(&pred_cloud, &gt_cloud)?,
        emd: eval::emd(&pred_small, &gt_small, emd_cap)?,
        fscore: eval::fscore(&pred_cloud, &gt_cloud, tau)?,
        tau,
    };

    let doc = json!({
        "cd": metrics.cd,
        "emd": metrics.emd,
        "fscore": metrics.fscore,
        "tau": metrics.tau,
        "samples": samples,
        "emd_samples": emd_samples,
        "seed": seed,
        "conventions": {
            "cd": "sum of both directed mean squared nearest-neighbor distances",
            "emd": "mean euclidean distance of the exact optimal perfect matching",
            "fscore": "200*P*R/(P+R) percent, matches within tau",
            "tau": tau,
            "samples": samples,
            "emd_samples": emd_samples,
            "sampling": "area-weighted, xorshift64* seeded; emd uses seed+1",
        },
    });
    std::fs::write(output, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn align_scene_cmd(
    object_specs: &[String],
    camera: &Path,
    pointmap: &Path,
    min_support: usize,
    trim: bool,
    output: &Path,
    report: &Path,
) -> Result<()> {
    let (intr, _) = load_camera(camera)?;
    let map = GlobalPointMap::from_tensor(&Tensor::load(pointmap)?)?;
    // The placement is descriptive metadata for scene objects; alignment
    // itself only needs the mesh, mask and intrinsics.
    let placement = auto_place(DEFAULT_FOV_DEG, 1.0, 1)?;

    let mut objects = Vec::with_capacity(object_specs.len());
    for spec in object_specs {
        let parts: Vec<&str> = spec.splitn(3, ':').collect();
        let [id, mesh_path, mask_path] = parts.as_slice() else {
            return Err(Error::InvalidArgument(format!(
                "object spec {spec:?} must be id:mesh.obj:mask.pxt"
            )));
        };
        let mesh = obj::load_obj(Path::new(mesh_path))?;
        let (mask, w, h) = load_mask_tensor(Path::new(mask_path))?;
        if (w, h) != (intr.width, intr.height) {
            return Err(Error::ShapeMismatch(format!(
                "mask {mask_path} is {w}x{h} but the scene camera is {}x{}",
                intr.width, intr.height
            )));
        }
        objects.push(SceneObject {
            id: id.to_string(),
            mesh,
            visibility_mask: mask,
            placement,
            intrinsics: intr,
        });
    }

    let opts = AlignOptions {
        min_support,
        trim_fraction: if trim { 0.1 } else { 0.0 },
    };
    let results = objects
        .iter()
        .map(|o| scene::align_object(o, &map, &opts))
        .collect::<Result<Vec<_>>>()?;
    let (mesh, records) = scene::compose_scene(&objects, &results)?;

    let per_object: Vec<Value> = records
        .iter()
        .zip(results.iter())
        .map(|(rec, res)| {
            json!({
                "id": rec.id,
                "alpha": rec.alpha,
                "residual_rms": res.residual_rms,
                "pixel_count": res.pixel_count,
            })
        })
        .collect();
    let doc = json!({
        "objects": per_object,
        "conventions": {
            "model": "single scale about the camera origin (pixel-alignment preserving)",
            "min_support_px": min_support,
            "trim_fraction": opts.trim_fraction,
        },
    });

    obj::save_obj(&mesh, output)?;
    std::fs::write(report, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth_cmd(
    shape: &str,
    radius: f64,
    box_half: f64,
    minor: f64,
    views: usize,
    fov: f64,
    size: u32,
    grid: u32,
    subdiv: u32,
    seed: u64,
    outdir: &Path,
) -> Result<()> {
    let (kind, extent) = match shape {
        "sphere" => (synth::ShapeKind::Sphere, radius),
        "box" => (synth::ShapeKind::Box, box_half),
        "torus" => (synth::ShapeKind::Torus, radius),
        other => return Err(Error::InvalidArgument(format!("unknown shape {other:?}"))),
    };
    let case = synth::SyntheticCase {
        shape: kind,
        size: extent,
        minor,
        views,
        fov_deg: fov,
        image_size: size,
        grid,
        subdivisions: subdiv,
        seed,
    };
    let data = synth::generate(&case)?;

    // Everything is computed; now stage the files and write them.
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    files.push((outdir.join("gt_mesh.obj"), obj::write_obj(&data.mesh).into_bytes()));
    for (i, view) in data.views.iter().enumerate() {
        let descr = CameraDescriptor::new(&view.intrinsics, Some(&view.pose));
        files.push((
            outdir.join(format!("cam_{i}.json")),
            descr.to_json()?.into_bytes(),
        ));
        let mask_bits: Vec<u8> = view.mask.iter().map(|&b| u8::from(b)).collect();
        let mask =
            Tensor::new_u8(vec![view.intrinsics.height as u64, view.intrinsics.width as u64], mask_bits)?;
        files.push((outdir.join(format!("mask_{i}.pxt")), mask.to_bytes()));
        files.push((
            outdir.join(format!("normals_{i}.pxt")),
            view.normals.to_tensor().to_bytes(),
        ));
        files.push((
            outdir.join(format!("depth_{i}.pxt")),
            view.depth.to_tensor().to_bytes(),
        ));
    }
    files.push((outdir.join("pointmap.pxt"), data.point_map.to_tensor().to_bytes()));
    let record = PlacementRecord::from(data.placement);
    files.push((
        outdir.join("placement.json"),
        serde_json::to_string_pretty(&record)?.into_bytes(),
    ));
    let case_doc = json!({
        "shape": shape,
        "radius": radius,
        "box_half": box_half,
        "minor": minor,
        "views": views,
        "fov_deg": fov,
        "image_size": size,
        "grid": grid,
        "subdivisions": subdiv,
        "seed": seed,
        "orbit_distance": data.placement.d,
    });
    files.push((
        outdir.join("case.json"),
        serde_json::to_string_pretty(&case_doc)?.into_bytes(),
    ));

    std::fs::create_dir_all(outdir)?;
    for (path, bytes) in files {
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

