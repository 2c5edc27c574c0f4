use crate::exact::Rat;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("zero polynomial rejected: its zero locus is everything")]
    ZeroPolynomial,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("division by zero")]
    DivisionByZero,

    #[error("variable `{0}` is not assigned")]
    MissingVariable(String),

    #[error("value {value} for variable `{name}` is outside its range [{low}, {high}]")]
    OutOfRange {
        name: String,
        value: Rat,
        low: Rat,
        high: Rat,
    },

    #[error("gadget precondition violated: {0}")]
    GadgetPrecondition(String),

    #[error("rank-one completion is under-determined; unconstrained cells: {0:?}")]
    UnderDetermined(Vec<(usize, usize)>),

    #[error("rank-one completion is infeasible: {0}")]
    CompletionInfeasible(String),

    #[error("assignment is not a root: f evaluates to {0}, expected 0")]
    NotARoot(Rat),

    #[error("assignment is outside the unit cube: {name} = {value}")]
    OutOfCube { name: String, value: Rat },

    #[error("internal factor template mismatch: {0}")]
    TemplateMismatch(String),

    #[error("degenerate factorization: two factors compare equal under the lexicographic order")]
    DegenerateFactorization,

    #[error("probe failure: {0}")]
    ProbeFailure(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
