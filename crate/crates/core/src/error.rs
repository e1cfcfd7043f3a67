use thiserror::Error;

/// Every failure mode of the library.
///
/// Variants map onto the CLI exit-code taxonomy through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("invalid cost model: {0}")]
    InvalidCost(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("point pair within {margin} of the cut locus (displacement {displacement})")]
    CutLocus { displacement: f64, margin: f64 },
    #[error("cost jet is singular (det b = {det})")]
    SingularJet { det: f64 },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("1-form is not closed (|d eta| = {defect:e})")]
    NotClosed { defect: f64 },
    #[error("w lost positive definiteness at an accepted iterate")]
    NonConvexBreakdown,
    #[error("spectral gap ratio {ratio:e} below threshold {threshold} (kernel dimension {dim} not certified)")]
    SpectralGapTooSmall { dim: usize, ratio: f64, threshold: f64 },
    #[error("operation requires dimension {required}, grid has dimension {actual}")]
    Dimension { required: &'static str, actual: usize },
    #[error("densities differ (max |rho - rhobar| = {max_diff:e})")]
    DensityMismatch { max_diff: f64 },
    #[error("field dump format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 config, 2 convergence, 3 cut locus, 4 spectral gap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoConvergence { .. } | Error::NonConvexBreakdown | Error::NotClosed { .. } => 2,
            Error::CutLocus { .. } | Error::SingularJet { .. } => 3,
            Error::SpectralGapTooSmall { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
