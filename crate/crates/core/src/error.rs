use thiserror::Error;

#[derive(Debug, Error)]
pub enum QalError {
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("duplicate qubit index {0}")]
    DuplicateQubit(usize),

    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("projectors do not form a complete orthogonal set: {0}")]
    IncompleteProjectors(String),

    #[error("eigendecomposition did not converge")]
    Eigen,

    #[error("degenerate training step: post-selected state has zero norm")]
    DegenerateStep,

    #[error("success probability {0:.3e} is below 1e-12; conditional loss undefined")]
    VanishingSuccess(f64),

    #[error("no accepted trajectory after {0} attempts")]
    NoAcceptedTrajectory(usize),

    #[error("IDX format error: {0}")]
    Idx(String),

    #[error("manifest verification failed: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QalError>;

pub(crate) fn invalid(msg: impl Into<String>) -> QalError {
    QalError::InvalidArgument(msg.into())
}
