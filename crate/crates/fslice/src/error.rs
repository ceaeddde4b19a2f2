//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid manifold parameter: {0}")]
    InvalidManifold(String),

    #[error("point {point:?} outside the admissible chart region: {reason}")]
    ChartDomain { point: Vec<f64>, reason: String },

    #[error("no unique shortest geodesic: d(x,y) = {distance:.6} >= injectivity radius {injectivity:.6}")]
    NoUniqueGeodesic { distance: f64, injectivity: f64 },

    #[error("trajectory left the admissible chart region at s = {s:.4}")]
    ChartEscape { s: f64 },

    #[error("shooting did not converge after {iterations} iterations (residual {residual:.3e})")]
    ShootingFailure { iterations: usize, residual: f64 },

    #[error("converged momentum |eta|_g = {norm:.6} >= bound mu = {bound:.6}; (t,x,y) outside the admissible neighborhood of the diagonal")]
    MomentumBound { norm: f64, bound: f64 },

    #[error("near-singular endpoint Jacobian (condition number {cond:.3e}); conjugate point suspected")]
    ConjugatePoint { cond: f64 },

    #[error("Van Vleck determinant not positive: D = {d:.6e}")]
    NonPositiveVanVleck { d: f64 },

    #[error("slice assembly failed at kernel entry ({row}, {col}): {source}")]
    Assembly {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grid mismatch: operator grid id {expected} vs input grid id {found}")]
    GridMismatch { expected: u64, found: u64 },

    #[error("mode count {requested} exceeds the grid's Nyquist capacity {capacity}")]
    Truncation { requested: usize, capacity: usize },

    #[error("Galerkin matrix deviates from Hermitian by {deviation:.3e} (tolerance 1e-9); raise the grid resolution")]
    Resolution { deviation: f64 },

    #[error("invalid cutoff: {0}")]
    InvalidCutoff(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("config: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
