use thiserror::Error;

use crate::trajectory::TrajectoryKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion norm {norm} is not unit")]
    NonUnitQuaternion { norm: f64 },

    #[error("integration produced a non-finite state")]
    NonFiniteState,

    #[error("duration {duration} s is not an integer multiple of dt = {dt} s")]
    DurationNotMultiple { duration: f64, dt: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown trajectory kind `{0}`")]
    UnknownKind(String),

    #[error("finite-difference Jacobian is not finite")]
    NonFiniteJacobian,

    #[error("SQP merit increased at the minimum step (merit {merit:.6e}, iteration {iteration})")]
    SolverDiverged { merit: f64, iteration: usize },

    #[error("reference horizon has {got} entries, expected {expected}")]
    HorizonMismatch { expected: usize, got: usize },

    #[error("at t = {t:.2} s: {source}")]
    AtTime { t: f64, source: Box<Error> },

    #[error("rollout {trajectory} with wind ({wind_x}, {wind_y}) m/s failed: {source}")]
    InCell {
        trajectory: TrajectoryKind,
        wind_x: f64,
        wind_y: f64,
        source: Box<Error>,
    },

    #[error("rollout of {len} records is too short for windows of {window} frames")]
    RolloutTooShort { len: usize, window: usize },

    #[error("{0} is reserved for unseen-trajectory evaluation and cannot enter a training set")]
    UnseenTrajectory(TrajectoryKind),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("control history holds {have} frames, estimate needs {need}")]
    HistoryNotWarm { have: usize, need: usize },

    #[error("report has no cells")]
    EmptyReport,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_time(t: f64, source: Error) -> Self {
        Error::AtTime {
            t,
            source: Box::new(source),
        }
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
