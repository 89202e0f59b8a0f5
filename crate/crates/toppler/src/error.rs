use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vertex {vertex} for graph family {family}")]
    InvalidVertex { family: String, vertex: String },

    #[error("invalid move at {vertex}: {reason}")]
    InvalidMove { vertex: String, reason: String },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("resource guard tripped: {0}")]
    ResourceGuard(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("kernel range error: {0}")]
    Range(String),

    #[error("negative mass {mass} at {vertex} exceeds the rounding clamp")]
    NegativeMass { vertex: String, mass: f64 },

    #[error(
        "spine-exit mass {spine_mass} leaves at most {reachable} reachable; target p={p} unreachable (raise C)"
    )]
    SpineExit {
        spine_mass: f64,
        reachable: f64,
        p: f64,
    },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
