use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("undeclared proposition `{name}` at byte {pos}")]
    UndeclaredProposition { name: String, pos: usize },

    #[error("negation applied to a non-atomic formula at byte {pos}")]
    NegationOnNonAtom { pos: usize },

    #[error("formula has {count} distinct counting atoms (limit {limit})")]
    TooManyAtoms { count: usize, limit: usize },

    #[error("automaton construction exceeded {limit} states")]
    TooManyStates { limit: usize },

    #[error("guard needs {needed} BDD variables (limit {limit})")]
    VariableCap { needed: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Syntax { .. }
            | Error::UndeclaredProposition { .. }
            | Error::NegationOnNonAtom { .. }
            | Error::Config(_)
            | Error::InvalidModel(_)
            | Error::InvalidInitialState(_)
            | Error::Io { .. }
            | Error::Serde(_) => 2,
            Error::BudgetExceeded(_) | Error::VariableCap { .. } | Error::TooManyStates { .. } => 4,
            Error::TooManyAtoms { .. } | Error::DimensionMismatch { .. } => 3,
        }
    }
}
