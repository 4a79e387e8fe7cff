use thiserror::Error;

/// Errors raised by the solvers and the configuration layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositive { name: String, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("source violates neutrality: residual {residual:e} exceeds tolerance {tolerance:e}")]
    NonCompatibleSource { residual: f64, tolerance: f64 },

    #[error("{direction} CFL violated: Courant number {courant:.6} > 1")]
    Cfl { direction: &'static str, courant: f64 },

    #[error("tridiagonal solve failed at cell {cell}: pivot {pivot:e}")]
    Pivot { cell: usize, pivot: f64 },

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    TimeStepTooLarge { dt: f64, bound: f64 },

    #[error("iteration stalled after {iterations} sweeps: last change {change:e}")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("order fit failed: {0}")]
    Fit(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("not implemented: {0}")]
    NotImplemented(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn require_positive(name: impl Into<String>, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive {
            name: name.into(),
            value,
        })
    }
}
