use std::path::PathBuf;

/// Errors raised by the numerical modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field length {got} does not match grid node count {expected}")]
    GridMismatch { expected: usize, got: usize },

    #[error("face {0} does not exist on this grid")]
    UnknownFace(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("not admissible: {0}")]
    NotAdmissible(String),

    #[error("singular linear system (pivot {pivot:.3e} at row {row})")]
    Singular { row: usize, pivot: f64 },

    #[error("CFL number {cfl:.4} exceeds limit {limit}")]
    Cfl { cfl: f64, limit: f64 },

    #[error("time axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("tolerance {tol:.3e} unreachable below truncation cap {cap}")]
    ToleranceUnreachable { tol: f64, cap: f64 },

    #[error("source profile vanishes at t = 0 (mu(0) = {0}); the Volterra operator is not of the second kind")]
    VanishingProfile(f64),

    #[error("degenerate stability record: {0}")]
    Degenerate(String),

    #[error("positivity floor violated: min u(T) = {0:.3e}")]
    PositivityFloor(f64),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
