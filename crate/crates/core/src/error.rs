use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh is not a closed oriented 2-manifold: {0}")]
    NonManifold(String),
    #[error("degenerate triangle {triangle} (area {area:e})")]
    Degenerate { triangle: usize, area: f64 },
    #[error("mesh is not strictly convex (min indicator {min_indicator:e})")]
    NotConvex { min_indicator: f64 },
    #[error("minimal geodesic is ambiguous: candidate lengths {first} and {second}")]
    AmbiguousGeodesic { first: f64, second: f64 },
    #[error("tangent vector is not based at the start of the path")]
    BaseMismatch,
    #[error("step of length {length} exceeds the limit {limit}")]
    StepTooLong { length: f64, limit: f64 },
    #[error("flow step rejected: {0}")]
    StepRejected(String),
    #[error("convexity lost at t = {t}")]
    ConvexityLost { t: f64 },
    #[error("need at least {needed} snapshots, have {have}")]
    NotEnoughSnapshots { needed: usize, have: usize },
    #[error("time {t} outside the available range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("points are {distance} apart, beyond the allowed {limit}")]
    TooFar { distance: f64, limit: f64 },
    #[error("argument outside the domain: {0}")]
    DomainError(String),
    #[error("insufficient paths: need {needed}, got {got}")]
    InsufficientPaths { needed: usize, got: usize },
    #[error("insufficient runs: need {needed}, got {got}")]
    InsufficientRuns { needed: usize, got: usize },
    #[error("linear solve failed: relative residual {residual:e} after {iterations} iterations")]
    SolverFailure { residual: f64, iterations: usize },
    #[error("walk did not terminate after {0} edge crossings")]
    WalkStuck(usize),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invariant check failed: {0}")]
    InvariantFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
