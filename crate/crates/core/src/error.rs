use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("adding {parent} -> {child} would create a cycle")]
    Cycle { parent: String, child: String },

    #[error("edge {parent} -> {child} already present")]
    DuplicateEdge { parent: String, child: String },

    #[error("self-loop on {0}")]
    SelfLoop(String),

    #[error("size limit exceeded: {what} is {got}, maximum {max}")]
    SizeLimit { what: &'static str, got: usize, max: usize },

    #[error("design matrix for node {node} is rank deficient")]
    RankDeficient { node: String },

    #[error("node {node} needs more than {needed} rows, got {got}")]
    InsufficientRows { node: String, needed: usize, got: usize },

    #[error("node {node} has zero residual variance; score undefined")]
    DegenerateVariance { node: String },

    #[error("variable {0} is constant")]
    DegenerateColumn(String),

    #[error("correlation submatrix is singular")]
    SingularCorrelation,

    #[error("variable sets differ")]
    VariableMismatch,

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("duplicate variable name {0}")]
    DuplicateVariable(String),

    #[error("records are not sorted by date (row {0})")]
    UnsortedInput(usize),

    #[error("release has no records")]
    EmptyRelease,

    #[error("non-positive value {value} in {variable}")]
    NonPositiveValue { variable: String, value: f64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration at {field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("header does not match schema: expected {expected:?}, found {found:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}
