use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {0:?} is outside the metric domain")]
    OutOfDomain([f64; 3]),
    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eig:e})")]
    NotSpd { point: [f64; 3], min_eig: f64 },
    #[error("finite-difference stencil leaves the metric domain at {0:?}")]
    StencilClipped([f64; 3]),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("degenerate face {0}")]
    DegenerateFace(usize),
    #[error("angle {0} is outside (0, pi)")]
    BadAngle(f64),
    #[error("no plane with the requested contact angles exists")]
    NoSolution,
    #[error("contact-angle plane is tangential (window endpoint)")]
    Tangential,
    #[error("slicing plane misses the cone interior")]
    EmptySlice,
    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),
    #[error("contact curve on face {0} is not closed")]
    OpenContactCurve(usize),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("surface is not minimal: |H|_inf = {0:e}")]
    NotMinimal(f64),
    #[error("surface does not separate the domain")]
    NotAdmissible,
    #[error("surface touches an obstacle (clearance {0:e})")]
    ObstacleContact(f64),
    #[error("descent did not converge after {0} iterations")]
    NotConverged(usize),
    #[error("at least {0} refinement levels required")]
    InsufficientLevels(usize),
    #[error("eigen-solver breakdown: {0}")]
    SolverBreakdown(String),
    #[error("Neumann data incompatible (defect {0:e})")]
    Incompatible(f64),
    #[error("linear solver did not converge: {0}")]
    NoConvergence(String),
    #[error("Newton iteration diverged at parameter {0}")]
    NewtonDiverged(f64),
    #[error("leaf left the domain at parameter {0}")]
    LeafLeftDomain(f64),
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing baseline: {0}")]
    MissingBaseline(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("scenario {name}: {source}")]
    Scenario { name: String, source: Box<Error> },
}

impl Error {
    /// The error with scenario context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Scenario { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
