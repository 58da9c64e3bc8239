use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum McarmaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),

    #[error("eigenvalue solver did not converge")]
    EigenFailure,

    #[error("Sylvester equation is singular (spectra of A and -B overlap)")]
    SylvesterSingular,

    #[error("matrix is singular at lambda = {0}")]
    SingularResolvent(String),

    #[error("eigenvalue within {margin:e} of the imaginary axis (min |Re| = {min_re:e})")]
    ImaginaryAxisEigenvalue { margin: f64, min_re: f64 },

    #[error("model is not causal: {0}")]
    NotCausal(String),

    #[error("unstable generator: spectral bound {0} >= 0")]
    UnstableGenerator(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid Levy specification: {0}")]
    InvalidLevy(String),

    #[error("Gaussian Levy component is not supported in pathwise simulation; set Q1 = 0")]
    GaussianPartUnsupported,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, McarmaError>;
