use thiserror::Error;

/// Errors raised while building meshes, assembling systems or solving them.
#[derive(Debug, Error)]
pub enum NlmcError {
    #[error("perforation {id} removes only {removed} fine triangles (at least 4 required)")]
    PerforationTooSmall { id: usize, removed: usize },

    #[error("perforations {a} and {b} are closer than the required clearance {clearance:.3e} (gap {gap:.3e})")]
    PerforationOverlap {
        a: usize,
        b: usize,
        gap: f64,
        clearance: f64,
    },

    #[error("perforation {id} is not strictly inside the domain with clearance {clearance:.3e}")]
    PerforationOutsideDomain { id: usize, clearance: f64 },

    #[error("invalid mesh spacing: {0}")]
    InvalidSpacing(String),

    #[error("fine grid of {fine_x}x{fine_y} cells is not nested in a {nx}x{ny} coarse grid")]
    NonNestedGrids {
        fine_x: usize,
        fine_y: usize,
        nx: usize,
        ny: usize,
    },

    #[error("triangle {triangle} has non-positive area {area:e}")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("iterative solver did not converge in {max_iters} iterations (relative residual {residual:e})")]
    NotConverged { max_iters: usize, residual: f64 },

    #[error("system matrix is singular or indefinite")]
    SingularSystem,

    #[error("continuum {continuum} does not exist in block {block} (available: 0..={available})")]
    InvalidContinuum {
        block: usize,
        continuum: usize,
        available: usize,
    },

    #[error("rank-deficient constraints for block {block}: {detail}")]
    RankDeficientConstraints { block: usize, detail: String },

    #[error("saddle-point solve failed for block {block} (residual {residual:e})")]
    SaddleSolveFailure { block: usize, residual: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("block {block} has no fine triangles")]
    EmptyBlock { block: usize },

    #[error("reference field has zero norm")]
    ZeroReference,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("layout generator failed: {0}")]
    Generator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, NlmcError>;
