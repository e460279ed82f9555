use thiserror::Error;

/// Failure modes of the solver pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported-dimension: {0}")]
    UnsupportedDimension(String),
    #[error("not-a-descendant: {0}")]
    NotADescendant(String),
    #[error("not-nested: {0}")]
    NotNested(String),
    #[error("degree-unsupported: quadrature of degree {0} requested (max 6)")]
    DegreeUnsupported(usize),
    #[error("singular-geometry: cell {cell} has signed area {area:e}")]
    SingularGeometry { cell: usize, area: f64 },
    #[error("dimension-mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("max-cycles-exceeded: residual {residual:e} after {cycles} V-cycles")]
    MaxCyclesExceeded { cycles: usize, residual: f64 },
    #[error("not-converged: eigensolver stopped after {iters} iterations (residual {residual:e})")]
    NotConverged { iters: usize, residual: f64 },
    #[error("indefinite-mass: mass matrix failed the positive definiteness probe")]
    IndefiniteMass,
    #[error("scf-not-converged: {iters} iterations, last change {change:e}")]
    ScfNotConverged { iters: usize, change: f64 },
    #[error("mass-block-singular: Schur pivot {pivot:e} relative to gamma")]
    MassBlockSingular { pivot: f64 },
    #[error("correction-diverged: lambda grew from {from} to {to}")]
    CorrectionDiverged { from: f64, to: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
