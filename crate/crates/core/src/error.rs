use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid with {points} points per axis cannot resolve n_max = {n_max} (need at least {required})")]
    GridTooSmall {
        points: usize,
        n_max: usize,
        required: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("step size underflow at t = {t}: dt = {dt:e} < min_dt = {min_dt:e}")]
    StepUnderflow { t: f64, dt: f64, min_dt: f64 },

    #[error(
        "degenerate rheology (q = {q} < 11/5 with kappa = 0): right-hand side is not Lipschitz; set an override to proceed"
    )]
    DegenerateRheology { q: f64 },

    #[error("contraction ratio undefined for identical inputs")]
    IdenticalInputs,

    #[error("sample budget {0} too small (need at least 100)")]
    BudgetTooSmall(usize),

    #[error("finite-time extinction requires q < 2 (got q = {0})")]
    NoExtinction(f64),

    #[error("period T = {period} too short for the extinction bound; need T >= {required}")]
    IncompatiblePeriod { period: f64, required: f64 },

    #[error("invalid forcing: {0}")]
    InvalidForcing(String),

    #[error("linear solver breakdown: {0}")]
    Breakdown(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
