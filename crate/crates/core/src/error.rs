use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("joint `{joint}`: expected {expected} {what}, got {got}")]
    DimensionMismatch {
        joint: String,
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("state has {got} {what} entries, skeleton needs {expected}")]
    StateSize {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("body index {0} out of range")]
    InvalidBody(usize),

    #[error("joint-space mass matrix is not positive definite")]
    SingularMassMatrix,

    #[error("LCP row {row} has non-positive diagonal {value}")]
    ZeroDiagonal { row: usize, value: f64 },

    #[error("malformed LCP problem: {0}")]
    MalformedProblem(String),

    #[error("LCP has no solution: {0}")]
    NoSolution(String),

    #[error("body `{body}` is {gap:.4} m from the ground, cannot anchor")]
    NotOnGround { body: String, gap: f64 },

    #[error("support ellipse fitted for anchors {fitted:?}, current anchors are {current:?}")]
    StaleEllipse {
        fitted: Vec<usize>,
        current: Vec<usize>,
    },

    #[error("support ellipse needs at least one foot outline")]
    EmptySupport,

    #[error("guide `{guide}` references unknown target `{target}`")]
    DanglingGuide { guide: String, target: String },

    #[error("invalid world: {0}")]
    InvalidWorld(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
