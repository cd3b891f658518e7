use thiserror::Error;

/// Errors raised by the geometric and operator layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty ADR set")]
    EmptySet,
    #[error("set needs cardinality at least two (diam = 0 or fewer than 2 points)")]
    Degenerate,
    #[error("radius out of range: {0}")]
    RadiusOutOfRange(f64),
    #[error("invalid quasi-triangle constant {0} (must be >= 1)")]
    InvalidTriangleConstant(f64),
    #[error("singularity: kernel evaluated at coincident points")]
    Singularity,
    #[error("cube not in lattice")]
    ForeignCube,
    #[error("E_Q not aligned with E")]
    NotAligned,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("p = {p} outside the admissible range ({lo}, {hi}] (lower end d/(d+gamma), gamma = min(alpha_rho, alpha))")]
    ExponentOutOfRange { p: f64, lo: f64, hi: f64 },
    #[error("empty effective family")]
    EmptyFamily,
    #[error("expression error: {0}")]
    Expr(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
