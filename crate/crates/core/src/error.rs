use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("argument {value} outside the admissible part of the interval ({lo}, {hi})")]
    Domain { value: f64, lo: f64, hi: f64 },
    #[error("value {value} outside the range of phi")]
    Range { value: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("operation requires periodic boundary conditions")]
    BoundaryCondition,
    #[error("Picard iteration diverged on chunk {chunk} (contraction ratio {ratio})")]
    PicardDivergence { chunk: usize, ratio: f64 },
    #[error("problem size {size} exceeds the cap {cap}")]
    Size { size: usize, cap: usize },
    #[error("model error: {0}")]
    Model(String),
    #[error("test function support error: {0}")]
    Support(String),
    #[error("fields live on different grids")]
    GridMismatch,
}
