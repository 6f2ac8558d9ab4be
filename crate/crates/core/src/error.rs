use thiserror::Error;

/// Errors surfaced by the reconstruction library.
#[derive(Debug, Error)]
pub enum GhostError {
    #[error("non-finite sample encountered in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("pencil size {d} out of range for signal length {len}")]
    PencilOutOfRange { d: usize, len: usize },

    #[error("volume carries no parity labeling; cannot split into virtual echoes")]
    MissingParity,

    #[error("sampling mask for {0} parity is empty; completion is infeasible")]
    EmptyMask(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("calibration is ill-posed: {0}")]
    IllPosed(String),

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, GhostError>;
