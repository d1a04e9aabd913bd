use thiserror::Error;

/// Errors raised while constructing or running a game.
#[derive(Debug, Error)]
pub enum GameError {
    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("{what} does not sum to 1 (sum = {sum})")]
    NotNormalised { what: String, sum: String },

    #[error("{what} has a negative entry")]
    Negative { what: String },

    #[error("invalid game: {0}")]
    Invalid(String),

    #[error("cannot step from terminal state {0}")]
    TerminalStep(usize),

    #[error("type space of player {0} is empty")]
    EmptyTypeSpace(usize),

    #[error("prior of player {0} is not strictly positive")]
    NonPositivePrior(usize),
}

/// Errors raised by the verifier.
#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Game(#[from] GameError),

    #[error("quotient map is inconsistent: histories {first} and {second} share node {key} but differ in {what}")]
    QuotientViolation {
        key: String,
        first: String,
        second: String,
        what: String,
    },

    #[error("type '{0}' has unbounded memory and cannot be quotiented")]
    InfiniteMemory(String),

    #[error("chain exceeded {0} nodes; the quotient is not finite")]
    TooLarge(usize),

    #[error("the ideal process needs a pure type distribution")]
    MixedDelta,

    #[error("chain node {node} is missing planning annotations")]
    MissingAnnotation { node: usize },

    #[error("malformed chain: {0}")]
    Malformed(String),

    #[error("chain parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Errors raised when loading scenarios or traces.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Game(#[from] GameError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("invalid probability literal '{0}'")]
    BadProbability(String),

    #[error("{0}")]
    Invalid(String),
}
