use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spectral parameter must be non-real (got Im z = 0 at Re z = {re})")]
    NonrealRequired { re: f64 },

    #[error("probe point {lambda} coincides with an atom of the measure")]
    AtomAtProbe { lambda: f64 },

    #[error("data is not Hölder at {lambda} (exponent {alpha})")]
    NotHolder { lambda: f64, alpha: f64 },

    #[error("increments vanish on {zero} of {total} radii; the function is locally constant")]
    DegenerateSamples { zero: usize, total: usize },

    #[error("log-log fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("need at least {required} nodes, got {got}")]
    TooFewNodes { required: usize, got: usize },

    #[error("no atom node is stored at {lambda}")]
    NoAtomAtLambda { lambda: f64 },

    #[error("exponent s = {s} must exceed 1/2")]
    InvalidExponent { s: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("evaluator failed at y = {y}: {source}")]
    EvaluatorFailure {
        y: f64,
        #[source]
        source: Box<Error>,
    },
}

pub(crate) fn invalid_model(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
