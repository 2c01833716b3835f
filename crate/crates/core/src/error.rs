use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("vector of length {0} cannot be reshaped into a square matrix")]
    NotSquareLength(usize),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("operator is not Hermitian (max asymmetry {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("not a density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("eigenvalue computation failed to converge")]
    EigenFailure,

    #[error("matrix exponential overflowed at t = {t}")]
    ExpOverflow { t: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("jump operator {index} has negative rate {rate}")]
    NegativeRate { index: usize, rate: f64 },

    #[error("ill-conditioned interpolation system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("spectral data is inconsistent: {0}")]
    InconsistentSpectrum(String),

    #[error("empty observable set")]
    EmptyObservableSet,

    #[error(
        "observability condition failed: Krylov subspaces of the observables and the identity \
         span {achieved} of {required} dimensions"
    )]
    NotReconstructible { achieved: usize, required: usize },

    #[error(
        "time-grid condition failed: det[alpha_k(t_j)] = {determinant:.3e} is numerically zero"
    )]
    SingularTimeGrid { determinant: f64 },

    #[error("time grid needs exactly {expected} instants, got {found}")]
    WrongGridSize { expected: usize, found: usize },

    #[error("linear system is rank deficient (rank {rank} of {required}); the record does not determine the state")]
    RankDeficient { rank: usize, required: usize },

    #[error("no reconstructible observable set found after {attempts} attempts")]
    SearchFailed { attempts: usize },

    #[error("state projection failed: no positive spectrum left after clipping")]
    ZeroTraceAfterClipping,
}
