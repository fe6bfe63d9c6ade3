use thiserror::Error;

use crate::action::InstantonResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spatial dimension must be 1, 2 or 3 (got {0})")]
    InvalidDimension(usize),

    #[error("box length must be positive (got {0})")]
    NonPositiveLength(f64),

    #[error("at least 2 modes per dimension are required (got {0})")]
    TooFewModes(usize),

    #[error("fields live on different bases")]
    BasisMismatch,

    #[error("grid fields have mismatched shapes")]
    GridMismatch,

    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("truncation level N is not set on the drift")]
    MissingTruncation,

    #[error("theta must lie in [0, 1) (got {0})")]
    ThetaOutOfRange(f64),

    #[error("delta must lie in (0, 1) (got {0})")]
    DeltaOutOfRange(f64),

    #[error("time grid is not uniform")]
    NonUniformGrid,

    #[error("solver time step {dt} does not divide the control step {control_dt}")]
    StepMismatch { dt: f64, control_dt: f64 },

    #[error("blow-up at step {step} (t = {time}): non-finite state")]
    BlowUp { step: usize, time: f64 },

    #[error("{reps} replications requested, at least {min} required")]
    InsufficientReplications { reps: usize, min: usize },

    #[error("standard error {stderr:.3e} exceeds requested tolerance {tolerance:.3e} at delta = {delta}")]
    StandardErrorTooLarge { delta: f64, stderr: f64, tolerance: f64 },

    #[error("event radius must be positive (got {0})")]
    DegenerateEvent(f64),

    #[error("control cost {cost:.4e} exceeds the admissible budget {budget:.4e}")]
    CostClamp { cost: f64, budget: f64 },

    #[error("minimizer did not converge after {} iterations (gradient norm {:.3e}, terminal miss {:.3e})", .last.iterations, .last.gradient_norm, .last.terminal_miss)]
    NonConvergence { last: Box<InstantonResult> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64) -> Self {
        Error::InvalidParameter { name, value }
    }

    /// Numerical failures map to CLI exit code 3, everything else to 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::NonConvergence { .. }
                | Error::NonFinite(_)
                | Error::StandardErrorTooLarge { .. }
        )
    }
}
