use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("norm drift {drift:.3e} at step {step} (t = {time:.4})")]
    NormDrift { step: usize, time: f64, drift: f64 },
    #[error("exchange symmetry violated: residual {0:.3e}")]
    SymmetryViolation(f64),
    #[error("blast failed: spin-up norm {0:.3e} is too small to project onto")]
    EmptyProjection(f64),
    #[error("basis dimension {required} exceeds cap {cap}")]
    DimensionCap { required: usize, cap: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("confinement-induced resonance: denominator {0:.3e}")]
    Resonance(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("config error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
