use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid subdivision count {0}: at least one square per side is required")]
    InvalidSubdivision(usize),

    #[error("triangle index {index} out of range for a mesh with {len} triangles")]
    InvalidTriangle { index: usize, len: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("polynomial degree {0} is not supported (the pair needs k >= 2)")]
    InvalidDegree(usize),

    #[error("point ({x}, {y}) lies outside cell {cell}")]
    PointOutsideCell { cell: usize, x: f64, y: f64 },

    #[error("cell {0} is not part of the active mesh")]
    InactiveCell(usize),

    #[error("face {0} is not an interior face of the active mesh")]
    BoundaryFace(usize),

    #[error("derivative order {order} is outside the admissible range {min}..={max}")]
    InvalidDerivativeOrder { order: usize, min: usize, max: usize },

    #[error("missing {kind} quadrature rule for active cell {cell}")]
    MissingRule { cell: usize, kind: &'static str },

    #[error("invalid method parameter: {0}")]
    InvalidParameter(String),

    #[error("singular system: zero pivot at elimination step {index}")]
    ZeroPivot { index: usize },

    #[error("singular saddle-point system: {0}")]
    SingularSystem(String),

    #[error("linear solve did not reach tolerance: relative residual {residual:e} after {steps} refinement steps")]
    NotConverged { residual: f64, steps: usize },

    #[error("eigenvalue iteration stagnated after {iterations} steps (last relative change {change:e})")]
    EigenStagnation { iterations: usize, change: f64 },

    #[error("configuration line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
