use thiserror::Error;

/// Every failure the library reports. Display strings are stable identifiers
/// that the CLI and tests match on.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("arity: expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("jacobian-singular (condition {0:.3e})")]
    JacobianSingular(f64),
    #[error("no-convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("not-projective-form: Euler residual {0:.3e}")]
    NotProjectiveForm(f64),
    #[error("non-reduced: coefficients share a common factor")]
    NonReduced,
    #[error("positive-dimensional-singularity")]
    PositiveDimensionalSingularity,
    #[error("not singular: residual {0:.3e}")]
    NotSingular(f64),
    #[error("degenerate-singularity: zero eigenvalue")]
    DegenerateSingularity,
    #[error("non-semisimple linear part")]
    NonSemisimple,
    #[error("resonance: divisor {0:.3e}")]
    Resonance(f64),
    #[error("not-normalized: Im(lambda) = {0}")]
    NotNormalized(f64),
    #[error("outside-sector")]
    OutsideSector,
    #[error("divergent-boundary-data: {0}")]
    DivergentBoundaryData(String),
    #[error("on-boundary")]
    OnBoundary,
    #[error("stencil outside domain")]
    StencilOutside,
    #[error("at-singularity")]
    AtSingularity,
    #[error("stiff-failure: step {0:.3e} underflowed")]
    StiffFailure(f64),
    #[error("off-plaque")]
    OffPlaque,
    #[error("perturbed singularity")]
    PerturbedSingularity,
    #[error("identical-plaques")]
    IdenticalPlaques,
    #[error("empty: zero occupancy")]
    Empty,
    #[error("grid mismatch")]
    GridMismatch,
    #[error("metric-degenerate: critical point")]
    MetricDegenerate,
    #[error("hit-critical-set")]
    HitCriticalSet,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
