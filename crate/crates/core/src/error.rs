//! Crate-wide error type.

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("camera list is empty")]
    EmptyCameras,

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("point is behind the near plane")]
    BehindNearPlane,

    #[error("camera center coincides with the region center")]
    CameraAtRegionCenter,

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("warp construction failed for node {node}: {source}")]
    WarpConstruction {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, Error>;
