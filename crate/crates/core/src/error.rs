use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),

    #[error("material error: {0}")]
    Material(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time set error: {0}")]
    TimeSet(String),

    #[error("integrator error: {0}")]
    Integrator(String),

    #[error("non-finite state at t = {time} (element {element}): {msg}")]
    NonFinite {
        time: f64,
        element: usize,
        msg: String,
    },

    #[error("solver did not converge: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },

    #[error("config error ({key}): {msg}")]
    Config { key: String, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
