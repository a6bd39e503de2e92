use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into two broad classes that the CLI maps onto exit codes:
/// malformed inputs / formats, and numeric or degenerate failures that only
/// surface once the math runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("rotation is not orthonormal with determinant +1 (deviation {0:.3e})")]
    InvalidRotation(f64),

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("field of view {0} degrees is outside (0, 180)")]
    FovOutOfRange(f64),

    #[error("auto-placement requires a square image, got {width}x{height}")]
    NonSquareImage { width: u32, height: u32 },

    #[error("invalid cube placement: {0}")]
    InvalidPlacement(String),

    #[error("voxel index ({i}, {j}, {k}) out of range for resolution {resolution}")]
    VoxelOutOfRange { i: i64, j: i64, k: i64, resolution: u32 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty view list")]
    NoViews,

    #[error("view index {index} out of range for {count} views")]
    ViewOutOfRange { index: usize, count: usize },

    #[error("empty mesh")]
    EmptyMesh,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh has zero total surface area")]
    ZeroAreaMesh,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point clouds have different sizes ({a} vs {b})")]
    CloudSizeMismatch { a: usize, b: usize },

    #[error("cloud size {size} exceeds the exact-matching cap {cap}")]
    OverMatchingCap { size: usize, cap: usize },

    #[error("insufficient alignment support: {found} constraint pixels, need at least {min}")]
    InsufficientSupport { found: usize, min: usize },

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("synthetic shape is not fully inside the generation cube: {0}")]
    ShapeOutsideCube(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("tensor file: {0}")]
    Pxt(String),

    #[error("obj file: {0}")]
    Obj(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// True for failures that only arise from degenerate numerics rather than
/// malformed input; the CLI reports these with a distinct exit code.
impl Error {
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::BehindCamera { .. }
                | Error::ZeroAreaMesh
                | Error::InsufficientSupport { .. }
                | Error::DegenerateAlignment(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
