use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("truncation error: population beyond N={n_max} is {tail:.3e} of total (limit 1e-3)")]
    Truncation { n_max: usize, tail: f64 },

    #[error("step size {dt} s rejected: {reason}")]
    StepSize { dt: f64, reason: String },

    #[error("negative population {value:.3e} in {component} at t = {time} s")]
    Negativity {
        time: f64,
        component: String,
        value: f64,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("signal level {level} is at or below the noise floor {floor}")]
    BelowNoiseFloor { level: f64, floor: f64 },

    #[error("invalid method: {0}")]
    InvalidMethod(String),

    #[error("unknown frequency list: {0}")]
    UnknownList(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that stem from user-provided configuration or input
    /// files, as opposed to failures during the simulation itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Config(_)
                | Error::InvalidMethod(_)
                | Error::UnknownList(_)
                | Error::Io(_)
        )
    }
}
