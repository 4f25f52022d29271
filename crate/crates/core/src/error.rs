use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("relative velocity |z| = {norm:e} is below the degeneracy floor")]
    DegenerateRelativeVelocity { norm: f64 },

    #[error("sampler {kind} cannot be used in dimension {dim}")]
    InvalidSamplerForDim { kind: &'static str, dim: usize },

    #[error("unsupported velocity dimension {0}; expected 2 or 3")]
    UnsupportedDimension(usize),

    #[error("pairwise collisions need an even particle count >= 2, got {0}")]
    OddParticleCount(usize),

    #[error("invalid checkpoint time {time}: {reason}")]
    InvalidCheckpoint { time: f64, reason: &'static str },

    #[error("time {time} is below the admissible start {t_min} for the {dim}D BKW solution")]
    InvalidTime { dim: usize, time: f64, t_min: f64 },

    #[error("density estimate of an empty ensemble")]
    EmptyEnsemble,

    #[error("density grids are not congruent: {0}")]
    GridMismatch(String),

    #[error("non-finite state: {0}")]
    NonFiniteState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{path}: {location}: {message}")]
    Format {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
