use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({0}, {1}, {2}, {3}) out of range for {4} orbitals")]
    IndexOutOfRange(usize, usize, usize, usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate basis: smallest overlap eigenvalue {0:e} below 1e-10")]
    DegenerateBasis(f64),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("unsupported basis: {0}")]
    UnsupportedBasis(String),
    #[error("Boys function argument must be non-negative, got {0}")]
    NegativeBoysArgument(f64),
    #[error("FCIDUMP line {line}: {kind}")]
    Fcidump { line: usize, kind: FcidumpErrorKind },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("missing high-frequency tail (|F(iw_max) w_max| = {0:e})")]
    MissingTail(f64),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },
    #[error("chemical potential bracket not found in [{0}, {1}]")]
    BracketNotFound(f64, f64),
    #[error("open-shell systems are not supported (n_electrons = {0})")]
    OpenShell(usize),
    #[error("orbital {orbital}: occupation {gamma} must lie strictly inside (0, 2)")]
    SingularOccupancy { orbital: usize, gamma: f64 },
    #[error("orbital {orbital}: negative first moment {sigma1:e}")]
    NegativeMoment { orbital: usize, sigma1: f64 },
    #[error("determinant space of dimension {0} exceeds the budget for {1}")]
    DimensionOverBudget(usize, &'static str),
    #[error("Lanczos breakdown after {0} restarts")]
    LanczosBreakdown(usize),
    #[error("empty term list")]
    EmptyTerms,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing field: {0}")]
    MissingField(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FcidumpErrorKind {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("orbital index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("non-numeric value '{0}'")]
    NonNumeric(String),
    #[error("expected 5 fields, found {0}")]
    FieldCount(usize),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
