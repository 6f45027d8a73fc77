use alloc::boxed::Box;
use alloc::string::String;

/// Errors produced by the solvers and constructions in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("size limit exceeded: {what} has {size} entries (limit {limit})")]
    SizeLimitExceeded {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("simplex anti-cycling safeguard tripped after {pivots} pivots")]
    SolverCycleDetected { pivots: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("couplings are defined over different marginal supports")]
    SupportMismatch,
    #[error("invalid exponent rho = {0} (must be > 1)")]
    InvalidRho(f64),
    #[error("divergence does not satisfy the flags required by {0}")]
    FlagViolation(&'static str),
    #[error("custom divergence rejected: {0}")]
    InvalidDivergence(String),
    #[error("solver did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("numerical underflow in kernel scaling")]
    NumericalUnderflow,
    #[error("could not bracket the scalar stationarity equation")]
    RootBracketFailure,
    #[error("unsupported quantization exponent p = {0} (only 1 and 2)")]
    InvalidP(f64),
    #[error("quantizer is not a centroid fixed point (deviation {deviation:e})")]
    NotAFixedPoint { deviation: f64 },
    #[error("plan support is not cyclically monotone (violation {violation:e})")]
    MonotonicityViolated { violation: f64 },
    #[error("only {remaining} grid points with positive distortion remain")]
    ZeroDistortion { remaining: usize },
    #[error("cost model has no second-derivative bound")]
    MissingB,
    #[error("invalid quantization exponent alpha = {0}")]
    InvalidAlpha(f64),
    #[error("function is not strictly increasing on the search interval")]
    NotIncreasing,
    #[error("modulus of continuity is not increasing and concave")]
    NotConcave,
    #[error("potentials violate dual feasibility (reduced cost {min_reduced_cost:e})")]
    InvalidPotentials { min_reduced_cost: f64 },
    #[error("least-squares design is degenerate: {0}")]
    DegenerateDesign(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("at eps = {eps:e}: {source}")]
    AtEps { eps: f64, source: Box<Error> },
}

impl Error {
    /// The underlying error, with any `eps` annotations removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtEps { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
