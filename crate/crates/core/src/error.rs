use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("zero denominator: {0} has no units")]
    ZeroDenominator(String),

    #[error("missing field `{0}` required by the requested evidence scope")]
    MissingField(&'static str),

    #[error("experimental and observational data are incompatible: {0}")]
    IncompatibleData(String),

    #[error("inconsistent benefit/ATE pair: benefit - ate = {0} lies outside [0, 1]")]
    InconsistentPair(String),

    #[error("invalid interval [{lower}, {upper}]")]
    InvalidInterval { lower: String, upper: String },

    #[error("infeasible policy inputs: {0}")]
    InfeasibleInputs(String),

    #[error("constraint polytope is empty")]
    EmptyPolytope,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid value for `{field}`: {message}")]
    Value { field: String, message: String },

    #[error("stratum `{stratum}` has an empty {arm} arm")]
    EmptyStratumArm { stratum: String, arm: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("nothing to report")]
    EmptyReport,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
