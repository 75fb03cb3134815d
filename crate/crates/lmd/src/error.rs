use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, lhs is {}x{}, rhs is {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{op} did not converge on a {rows}x{cols} matrix after {cap} sweeps")]
    NoConvergence {
        op: &'static str,
        rows: usize,
        cols: usize,
        cap: usize,
    },

    #[error("matrix is not symmetric: relative residual {residual:.3e}")]
    Asymmetric { residual: f64 },

    #[error("training diverged (loss not finite) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("model has no convergence certificate with stable=true; pass force to analyze anyway")]
    NotConverged,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
