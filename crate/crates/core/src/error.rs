use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("obstacle touches the unit-cell boundary: {0}")]
    ObstacleTouchesBoundary(String),

    #[error("fluid part of the cell is not connected ({components} components)")]
    DisconnectedFluid { components: usize },

    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("period eps = {eps} leaves subdomain {subdomain} without perforated cells")]
    EpsTooLarge { eps: f64, subdomain: usize },

    #[error("divergence target is incompatible: integral {integral:e} vs net boundary flux 0")]
    IncompatibleDivergence { integral: f64 },

    #[error("no Dirichlet anchor and the force has nonzero mean ({mean:e})")]
    NoAnchor { mean: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },

    #[error("Neumann data incompatible: net flux {0:e}")]
    IncompatibleFlux(f64),

    #[error("permeability tensor is not symmetric positive definite: {0:?}")]
    SingularK([[f64; 2]; 2]),

    #[error("degenerate normal: <nK,n> = {0:e}")]
    DegenerateNormal(f64),

    #[error("grids are incommensurate: {0}")]
    IncommensurateGrids(String),

    #[error("rate fit needs at least 3 rows, got {0}")]
    InsufficientRows(usize),

    #[error("rate fit needs positive errors, got {0:e}")]
    NonPositiveError(f64),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
