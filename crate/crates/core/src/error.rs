use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: vertex id {id} out of range for {num_vertices} vertices")]
    VertexOutOfRange {
        line: usize,
        id: u64,
        num_vertices: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid csr: {0}")]
    InvalidCsr(String),

    #[error("infeasible graph request: {0}")]
    Infeasible(String),

    #[error("invalid strip bounds: {0}")]
    InvalidStrips(String),

    #[error("invalid tiling: {0}")]
    InvalidTiling(String),

    #[error("invalid cache config: {0}")]
    InvalidCache(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad binary file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
