//! voxlift: pixel-aligned voxel feature lifting, hull carving, meshing,
//! fidelity metrics and scene alignment from the command line.
//!
//! Exit codes: 0 success, 2 invalid input or file format, 3 numeric or
//! degenerate failure. Diagnostics go to stderr; data goes to the files
//! named by -o (nothing is written on a failure exit).

mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "voxlift", version, about = "Pixel-aligned 3D geometry toolkit")]
struct Cli {
    /// Seed for every pseudo-random draw (surface sampling, synthesis).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; 0 picks the runtime default. Outputs are identical
    /// for any thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
pub(crate) struct PlacementArgs {
    /// Cube edge length in world units.
    #[arg(long, default_value_t = 1.0)]
    pub(crate) scale: f64,

    /// Field of view in degrees for auto-placement (square images only).
    #[arg(long, conflicts_with = "dist")]
    pub(crate) fov: Option<f64>,

    /// Explicit distance from the camera plane to the cube center,
    /// bypassing auto-placement.
    #[arg(long)]
    pub(crate) dist: Option<f64>,
}

#[derive(Subcommand)]
pub(crate) enum Command {
    /// Print the auto-placement distance and implied camera intrinsics.
    Place {
        #[arg(long, default_value_t = voxlift_core::placement::DEFAULT_FOV_DEG)]
        fov: f64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Image width and height for the implied intrinsics.
        #[arg(long, default_value_t = 512)]
        size: u32,
    },
    /// Lift multi-scale feature maps of one view into a feature volume.
    Lift {
        /// Comma-separated PXT feature maps, finest-to-coarsest or any order.
        #[arg(long, required = true, value_delimiter = ',')]
        features: Vec<PathBuf>,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        grid: u32,
        #[command(flatten)]
        placement: PlacementArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fuse several views' feature volumes by per-voxel averaging.
    Fuse {
        /// One view as `feats.pxt[,feats2.pxt...]:camera.json`; repeatable.
        #[arg(long = "view", required = true)]
        views: Vec<String>,
        /// Index of the view whose camera frame holds the cube.
        #[arg(long, default_value_t = 0)]
        reference: usize,
        #[arg(long)]
        grid: u32,
        #[command(flatten)]
        placement: PlacementArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Carve a silhouette hull occupancy from mask views.
    Carve {
        /// One view as `mask.pxt:camera.json`; repeatable.
        #[arg(long = "mask", required = true)]
        masks: Vec<String>,
        #[arg(long, default_value_t = 0)]
        reference: usize,
        #[arg(long)]
        grid: u32,
        #[command(flatten)]
        placement: PlacementArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Carve, convert to SDF, smooth and extract a mesh.
    Genmesh {
        #[arg(long = "mask", required = true)]
        masks: Vec<String>,
        #[arg(long, default_value_t = 0)]
        reference: usize,
        #[arg(long)]
        grid: u32,
        #[command(flatten)]
        placement: PlacementArgs,
        /// Box-filter half width applied to the SDF; 0 disables smoothing.
        #[arg(long, default_value_t = 1)]
        smooth: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sample a mesh's signed distance field onto the cube grid.
    Voxelize {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        grid: u32,
        #[command(flatten)]
        placement: PlacementArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Extract a mesh from a stored SDF grid (reads the placement sidecar).
    Mesh {
        #[arg(long)]
        sdf: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        iso: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Render camera-frame face normals of a mesh.
    RenderNormals {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Render a z-buffer depth map of a mesh.
    RenderDepth {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare two normal maps (IoU, PSNR, SSIM, angular statistics).
    EvalNormals {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = voxlift_core::eval::DEFAULT_BOUNDARY_WIDTH)]
        boundary_width: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare two meshes by sampled Chamfer distance, exact EMD and F-score.
    EvalGeo {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = voxlift_core::eval::DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = voxlift_core::eval::DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = voxlift_core::eval::DEFAULT_EMD_CAP)]
        emd_cap: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Recover per-object scales against a global point map and compose.
    AlignScene {
        /// One object as `id:mesh.obj:mask.pxt`; repeatable.
        #[arg(long = "object", required = true)]
        objects: Vec<String>,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        pointmap: PathBuf,
        #[arg(long, default_value_t = 10)]
        min_support: usize,
        /// Drop the worst 10% residual pixels in one trimming round.
        #[arg(long)]
        trim: bool,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Generate a synthetic ground-truth dataset into a directory.
    Synth {
        #[arg(long, value_parser = ["sphere", "box", "torus"])]
        shape: String,
        /// Sphere radius or torus major radius.
        #[arg(long, default_value_t = 0.3)]
        radius: f64,
        /// Box half extent.
        #[arg(long, default_value_t = 0.25)]
        box_half: f64,
        /// Torus minor (tube) radius.
        #[arg(long, default_value_t = 0.1)]
        minor: f64,
        #[arg(long, default_value_t = 6)]
        views: usize,
        #[arg(long, default_value_t = voxlift_core::placement::DEFAULT_FOV_DEG)]
        fov: f64,
        /// Image width and height.
        #[arg(long, default_value_t = 256)]
        size: u32,
        #[arg(long)]
        grid: u32,
        /// Icosphere subdivisions / torus tessellation level.
        #[arg(long, default_value_t = 3)]
        subdiv: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 0 for --help/--version and 2 for usage errors.
            e.exit();
        }
    };

    if cli.threads > 0 {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()
        {
            eprintln!("error: could not configure {} threads: {e}", cli.threads);
            std::process::exit(2);
        }
    }

    match commands::run(cli.command, cli.seed) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_degenerate() { 3 } else { 2 });
        }
    }
}
