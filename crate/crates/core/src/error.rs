use std::path::PathBuf;

/// Errors produced by the flow pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("fields live on different grids ({0} vs {1} cells)")]
    GridMismatch(usize, usize),

    #[error("{0} requires a nonempty set")]
    EmptySet(&'static str),

    #[error("{0} requires a set with nonempty complement")]
    FullSet(&'static str),

    #[error("{0} contains a non-finite value")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("config error at {path}:{line}: {reason}")]
    Config {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("set touches the domain frame (margin < 3 cells) at step {step}")]
    FrameContact { step: usize },

    #[error("step {step} failed: {reason}")]
    StepFailure { step: usize, reason: String },

    #[error("oracle time step underflow (dt < 1e-12 near extinction)")]
    DtUnderflow,

    #[error("oracle requires positive radii")]
    NonPositiveRadius,

    #[error("malformed PGM file {path}: {reason}")]
    Pgm { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 4 frame contact, 3 any numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParam { .. } | Error::Shape(_) => 2,
            Error::FrameContact { .. } => 4,
            _ => 3,
        }
    }
}
