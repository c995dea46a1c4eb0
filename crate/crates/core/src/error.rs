use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("receiver z-range [{recv_min}, {recv_max}] overlaps scatterer z-range [{x_min}, {x_max}]")]
    OverlappingLayers {
        x_min: f64,
        x_max: f64,
        recv_min: f64,
        recv_max: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Green's function is singular at zero distance")]
    SingularDistance,

    #[error("source {index} at ({x}, {y}, {z}) coincides with a grid node")]
    SourceOnNode { index: usize, x: f64, y: f64, z: f64 },

    #[error("max xi = {max_xi} gives an imaginary sound speed for c0 = {c0}")]
    ImaginarySpeed { max_xi: f64, c0: f64 },

    #[error("nonpositive radicand c0^-2 - xi at node {index}")]
    NonpositiveRadicand { index: usize },

    #[error("Born iteration diverged at iteration {iteration} (residual {residual:.3e})")]
    Divergence { iteration: usize, residual: f64 },

    #[error("Born iteration did not reach tolerance within {max_iter} iterations (last relative update {last:.3e})")]
    NotConverged { max_iter: usize, last: f64 },

    #[error("invalid regularization parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    InsufficientData(String),

    #[error("bad field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
