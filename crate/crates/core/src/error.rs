use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate polygon (area {0:e})")]
    DegeneratePolygon(f64),
    #[error("point coincides with polygon vertex {0}")]
    OnVertex(usize),
    #[error("point lies outside the polygon")]
    OutsidePolygon,

    #[error("no seed survived the domain test")]
    EmptySeedSet,
    #[error("rejection sampling exhausted after {0} rejections")]
    SamplingExhausted(usize),
    #[error("tessellation failure: {0}")]
    TessellationFailure(String),

    #[error("degenerate element {0}")]
    DegenerateElement(usize),
    #[error("singular least-squares fit: {0}")]
    SingularFit(String),
    #[error("boundary conditions leave rigid-body modes unconstrained")]
    UnconstrainedSystem,
    #[error("linear solver breakdown: {0}")]
    SolverBreakdown(String),

    #[error("stress recovery failed at node {0}")]
    RecoveryFailure(usize),
    #[error("reference field unavailable at ({0}, {1})")]
    ReferenceUnavailable(f64, f64),
    #[error("point ({0}, {1}) is outside the reference domain")]
    OutOfDomain(f64, f64),

    #[error("coarsening aborted: {0}")]
    CoarseningAborted(String),
    #[error("zero-length straightening chain")]
    ZeroLengthChain,
    #[error("no eligible patches remain")]
    NoEligiblePatches,

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
