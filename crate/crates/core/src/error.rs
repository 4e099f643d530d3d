use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid function space: {0}")]
    InvalidSpace(String),

    #[error("transfer between unrelated meshes: {0}")]
    Transfer(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular matrix encountered at column {column}")]
    Singular { column: usize },

    #[error("time step {dt:e} fell below dt_min {dt_min:e} at t = {t}")]
    StiffFailure { t: f64, dt: f64, dt_min: f64 },

    #[error("Newton iteration failed to converge at t = {t} (last residual {residual:e})")]
    NonConvergence { t: f64, residual: f64 },

    #[error("time regression: {previous} -> {next}")]
    TimeOrdering { previous: f64, next: f64 },

    #[error("refinement budget exhausted: max_generation {max_generation} reached (relative error {error:e})")]
    RefinementBudget { max_generation: u32, error: f64 },

    #[error("tolerance unreachable at t = {t}: estimate {estimate:e} after {redo} refinement rounds")]
    ToleranceUnreachable { t: f64, estimate: f64, redo: usize },

    #[error("undefined distance: {0}")]
    UndefinedDistance(String),

    #[error("runs are not comparable: {0}")]
    Comparability(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("parse error in {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
