use thiserror::Error;

/// Errors raised by graph construction and the analyses built on it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("nonpositive length on edge `{0}`")]
    NonpositiveLength(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("expected exactly one root, found {0}")]
    RootCount(usize),
    #[error("{variant} variant must be acyclic")]
    UnexpectedCycle { variant: String },
    #[error("circuit variant needs exactly one cycle, found {0}")]
    CycleCount(usize),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid length literal `{0}`")]
    LengthLiteral(String),
    #[error("pi-tree check requires the tree variant")]
    NotATree,
    #[error("edge `{edge}` has {cells} cells, at least 4 required")]
    UnderResolved { edge: String, cells: usize },
    #[error("time step {dt} violates the CFL limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("initial data: {0}")]
    InitialData(String),
    #[error("energy blow-up at t = {t}: {from} -> {to}")]
    BlowUp { t: f64, from: f64, to: f64 },
    #[error("root on the contour after {0} perturbations")]
    RootOnContour(usize),
    #[error("null space has dimension {0}")]
    MultipleNullSpace(usize),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("rational length: the spectrum meets the imaginary axis")]
    RationalLength,
    #[error("eigenvalue on the imaginary axis at i*{beta}")]
    AxisEigenvalue { beta: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
