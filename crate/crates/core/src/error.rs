use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("feature `{feature}` is resolved by {voxels:.3} voxels, need at least 2")]
    Resolution { feature: String, voxels: f64 },

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("invalid boundary conditions: {0}")]
    InvalidBoundary(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("time series spans {periods:.6} reference periods, not an integer number")]
    PeriodAlignment { periods: f64 },

    #[error("degenerate range: image has fewer than two distinct finite values")]
    DegenerateRange,

    #[error("dimension mismatch: {a_rows}x{a_cols} vs {b_rows}x{b_cols}")]
    DimensionMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("scan position (i={i}, j={j}): {source}")]
    ScanPosition {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used by the command line error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGeometry(_) => "invalid_geometry",
            Error::Resolution { .. } => "resolution",
            Error::Bounds(_) => "bounds",
            Error::InvalidBoundary(_) => "invalid_boundary",
            Error::Convergence { .. } => "convergence",
            Error::Sampling(_) => "sampling",
            Error::PeriodAlignment { .. } => "period_alignment",
            Error::DegenerateRange => "degenerate_range",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Parse { .. } => "parse",
            Error::Config { .. } => "config",
            Error::ScanPosition { .. } => "scan_position",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn dims(a: (usize, usize), b: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            a_rows: a.0,
            a_cols: a.1,
            b_rows: b.0,
            b_cols: b.1,
        }
    }
}
