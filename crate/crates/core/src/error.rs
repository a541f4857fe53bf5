use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid dimensions: {0}")]
    InvalidDims(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input has no zero crossing, so there is no surface to work with.
    #[error("no surface: {0}")]
    NoSurface(String),

    #[error("point lies outside the parameter space: {0}")]
    OutsideHull(String),

    #[error("degenerate simplex: vertex matrix is singular")]
    SingularSimplex,

    #[error("malformed volume file: {0}")]
    Format(String),

    #[error("unknown scene `{0}`")]
    UnknownScene(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_same_dims(a: &crate::grid::Dims, b: &crate::grid::Dims) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch {
            left: a.extents().to_vec(),
            right: b.extents().to_vec(),
        });
    }
    Ok(())
}
