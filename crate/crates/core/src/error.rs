use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported polynomial degree {0} (supported: 1, 2)")]
    UnsupportedDegree(usize),

    #[error(
        "conductivity tensor is not symmetric positive definite: [[{xx}, {xy}], [{xy}, {yy}]]"
    )]
    NotSpd { xx: f64, xy: f64, yy: f64 },

    #[error("point ({x}, {y}) lies outside the unit square")]
    PointOutsideDomain { x: f64, y: f64 },

    #[error("problem has no Dirichlet data")]
    MissingDirichletData,

    #[error("problem has no exact solution bundle")]
    MissingExactSolution,

    #[error("Neumann data is incompatible: total source {total:e} does not vanish")]
    IncompatibleNeumannData { total: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular system of dimension {dimension} (rank estimate: {rank_estimate:?})")]
    SingularSystem {
        dimension: usize,
        rank_estimate: Option<usize>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
