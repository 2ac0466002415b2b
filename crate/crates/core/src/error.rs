use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {dt} fails the stability guard dt*kappa*sup|v''| = {product:.4} >= 0.5")]
    StabilityGuard { dt: f64, product: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("configuration {0:?} is not strictly increasing")]
    NotInChamber(Vec<f64>),

    #[error("truncation window {window} is below ceil(L + 10 sqrt(L)) = {required}")]
    WindowTooSmall { window: i64, required: i64 },

    #[error("survival probability underflows at configuration {0:?}")]
    Underflow(Vec<i64>),

    #[error("no accepted sample after {attempts} attempts (acceptance rate so far 0/{attempts})")]
    MaxRejects { attempts: u64 },

    #[error("exit not reached before the horizon cap {cap}")]
    HorizonCap { cap: f64 },

    #[error("sample too small: need at least {needed}, got {got}")]
    Undersized { needed: usize, got: usize },

    #[error("horizon mismatch: path defined on [0, {available}], requested [0, {requested}]")]
    HorizonMismatch { available: f64, requested: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
