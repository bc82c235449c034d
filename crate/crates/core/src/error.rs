use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter box: {0}")]
    InvalidBox(String),

    #[error("drift slope interval [{low}, {high}] is not state-independent on the real line")]
    NotConstantSlope { low: f64, high: f64 },

    #[error("Riccati solution exceeded guard {guard} at t = {time}")]
    BlowUp { time: f64, guard: f64 },

    #[error("{what} = {value} outside the admissible range [{min}, {max}]")]
    OutOfRange { what: &'static str, value: f64, min: f64, max: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid time step: {0}")]
    InvalidStep(String),

    #[error("unstable grid: time step {dt} exceeds the admissible {max_dt}")]
    UnstableGrid { dt: f64, max_dt: f64 },

    #[error("candidate is not a superhedge: shortfall {shortfall} on path {path}")]
    NotASuperhedge { path: usize, shortfall: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
