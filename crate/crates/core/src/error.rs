use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: quarter index out of range in {label:?}")]
    QuarterOutOfRange { line: u64, label: String },

    #[error("line {line}: unknown quarter format {label:?} (expected YYYYQn)")]
    QuarterFormat { line: u64, label: String },

    #[error("line {line}: non-finite value for ({country}, {quarter}, {indicator})")]
    NonFinite { line: u64, country: String, quarter: String, indicator: String },

    #[error("duplicate key ({country}, {quarter}, {indicator}) at line {line}")]
    DuplicateKey { line: u64, country: String, quarter: String, indicator: String },

    #[error("degenerate series: {indicator} for {country} is constant ({value})")]
    DegenerateSeries { country: String, indicator: String, value: f64 },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("dataset is not regularized")]
    NotRegularized,

    #[error("dataset is already regularized")]
    AlreadyRegularized,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no transitions to train on")]
    EmptyTransitions,

    #[error("training diverged at epoch {epoch}, update {update} (step size {gamma}): {reason}")]
    Divergence { epoch: usize, update: u64, gamma: f64, reason: String },

    #[error("singular linear system")]
    Singular,

    #[error("invalid Markov reward process: {0}")]
    InvalidMrp(String),

    #[error("rank-deficient design: column {index} ({name}) is linearly dependent on earlier columns")]
    RankDeficient { index: usize, name: String },

    #[error("too few rows for regression: {rows} rows, {columns} columns")]
    Underdetermined { rows: usize, columns: usize },

    #[error("quarter mismatch between forecasts and actuals: {0}")]
    QuarterMismatch(String),

    #[error("empty evaluation window")]
    EmptyWindow,

    #[error("incremental_root forecast needs the previous GDP level and change")]
    MissingContext,

    #[error("{file} line {line}: {message}")]
    Format { file: String, line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
