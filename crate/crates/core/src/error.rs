use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("assumption violated at column {column}: smallest eigenvalue {eigenvalue:e} <= {tolerance:e}")]
    AssumptionViolation {
        column: usize,
        eigenvalue: f64,
        tolerance: f64,
    },

    #[error("invalid spectral point {re} + {im}i: z must lie off [0, inf)")]
    InvalidSpectralPoint { re: f64, im: f64 },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular matrix encountered: {0}")]
    Singular(String),

    #[error("zero-point iteration diverged: iterate {value:e} exceeds {limit:e}")]
    Divergence { value: f64, limit: f64 },

    #[error("Jacobian identity J u = v violated (residual {residual:e})")]
    JacobianIdentity { residual: f64 },

    #[error("no grid point reaches density threshold {threshold:e}")]
    EmptySupport { threshold: f64 },

    #[error("support reaches the end of the grid at x = {x_hi}; enlarge the grid")]
    TruncatedSupport { x_hi: f64 },

    #[error("negative density {value:e} at x = {x}")]
    NegativeDensity { x: f64, value: f64 },

    #[error("at grid point x = {x}: {source}")]
    GridPoint {
        x: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("bias at N = {size} is below noise: {bias:e} < 3 x stderr {stderr:e}")]
    SignalBelowNoise { size: usize, bias: f64, stderr: f64 },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("invalid positive-system witness (residual {residual:e})")]
    WitnessInvalid { residual: f64 },

    #[error("dominance precondition violated at ({i}, {j})")]
    DominanceViolation { i: usize, j: usize },

    #[error("inequality violated: {0}")]
    InequalityViolation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::Singular(_)
            | Error::Divergence { .. }
            | Error::JacobianIdentity { .. }
            | Error::EmptySupport { .. }
            | Error::TruncatedSupport { .. }
            | Error::NegativeDensity { .. }
            | Error::Eigensolver(_) => true,
            Error::GridPoint { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
