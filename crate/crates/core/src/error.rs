use thiserror::Error;

/// Library-wide error type.
///
/// Errors split into two groups: validation errors (malformed input, shape or
/// configuration problems) and numerical failures (degenerate data that makes
/// an otherwise valid computation meaningless). The CLI maps the groups to
/// exit codes 2 and 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate observation for customer {customer:?}, item {item:?}")]
    DuplicateObservation { customer: String, item: String },

    #[error("line {line}: {message}")]
    MalformedRecord { line: u64, message: String },

    #[error("line {line}: label {label:?} is not in the alphabet")]
    UnknownLabel { line: u64, label: String },

    #[error("item {item:?} assigned to category {second:?} but already in {first:?}")]
    CategoryConflict {
        item: String,
        first: String,
        second: String,
    },

    #[error("alphabet needs at least 2 distinct symbols, got {got}")]
    AlphabetTooSmall { got: usize },

    #[error("duplicate symbol {symbol:?} in alphabet")]
    DuplicateSymbol { symbol: String },

    #[error("{what} index {index} out of range ({len} available)")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("graph has no observations")]
    EmptyGraph,

    #[error("operation requires the binary alphabet {{+1, -1}}, got {{{got}}}")]
    NonBinaryAlphabet { got: String },

    #[error("category {category} has no observations")]
    EmptyCategory { category: usize },

    #[error("category {category} contains no items")]
    CategoryWithoutItems { category: usize },

    #[error("model alphabet [{model}] does not match graph alphabet [{graph}]")]
    AlphabetMismatch { model: String, graph: String },

    #[error("model covers {model} items, graph has {graph}")]
    ItemCoverage { model: usize, graph: usize },

    #[error("expected {expected} per-category models, got {got}")]
    ModelCountMismatch { expected: usize, got: usize },

    #[error("customer {customer}: entropy denominator {value:e} is below 1e-12")]
    DegenerateEntropy { customer: usize, value: f64 },

    #[error("rank {rank} exceeds limit {limit} for a {rows}x{cols} matrix")]
    RankTooLarge {
        rank: usize,
        limit: usize,
        rows: usize,
        cols: usize,
    },

    #[error("score matrix has no observed entries")]
    EmptyMatrix,

    #[error("column {column} of the score matrix has no observed entries")]
    EmptyColumn { column: usize },

    #[error("matrix has missing entries (first at row {row}, column {column}); spectral projection needs a complete matrix, use als_factorize instead")]
    IncompleteMatrix { row: usize, column: usize },

    #[error("customer {customer} has no score in category {category}; enable partial-row classification or factorize first")]
    MissingCategoryScore { customer: usize, category: usize },

    #[error("need at least {needed} points for k={k}, got {got}")]
    TooFewPoints { k: usize, needed: usize, got: usize },

    #[error("{what} must be finite")]
    NonFinite { what: &'static str },

    #[error("all scores are identical; density estimation is undefined")]
    IdenticalScores,

    #[error("pooled like-fraction is 1/2 within 1e-9; score ordering is undefined")]
    DegenerateDirection,

    #[error("centers are degenerate (pooled like-fraction 1/2 within 1e-9)")]
    DegenerateCenters,

    #[error("segment parameters must be pairwise distinct, found {value} twice")]
    EqualParameters { value: f64 },

    #[error("every category weight is zero; separation constants are undefined")]
    ZeroWeights,

    #[error("lengths differ: {left_what} has {left}, {right_what} has {right}")]
    LengthMismatch {
        left_what: &'static str,
        left: usize,
        right_what: &'static str,
        right: usize,
    },

    #[error("proportions must be positive and sum to 1 within 1e-9: {message}")]
    InvalidSimplex { message: String },

    #[error("invalid parameter: {message}")]
    InvalidParameter { message: String },

    #[error("no customers left to evaluate")]
    NothingToEvaluate,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for degenerate-data failures, false for input and shape problems.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateEntropy { .. }
                | Error::IdenticalScores
                | Error::DegenerateDirection
                | Error::DegenerateCenters
                | Error::NonFinite { .. }
        )
    }

    /// Process exit code for the CLI: 2 for validation errors, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
