use std::path::PathBuf;

/// Error type shared by the library. Binaries wrap this in `anyhow` for display.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: bad header: expected {expected:?}, got {got:?}")]
    BadHeader {
        path: PathBuf,
        expected: String,
        got: String,
    },

    #[error("post {post} listed with conflicting pages {a:?} and {b:?}")]
    PageConflict { post: String, a: String, b: String },

    #[error("{path} line {line}: expected {expected} topic columns, got {got}")]
    TopicColumnMismatch {
        path: PathBuf,
        line: u64,
        expected: usize,
        got: usize,
    },

    #[error("at most 65535 topic columns supported, got {got}")]
    TooManyTopics { got: usize },

    #[error("interaction references unknown post {post}")]
    UnknownPost { post: String },

    #[error("post index {post} has no page mapping")]
    MissingPage { post: u32 },

    #[error("user index {index} out of range (dataset has {n_users} users)")]
    UnknownUser { index: usize, n_users: usize },

    #[error("gini requires at least one value")]
    GiniEmpty,

    #[error("gini undefined for all-zero input (mean is zero)")]
    GiniAllZero,

    #[error("gini requires non-negative finite values")]
    GiniInvalid,

    #[error("logarithmic binning requires positive values: {detail}")]
    NonPositiveLogValue { detail: String },

    #[error("binning requires aligned non-empty series and at least one bin")]
    EmptyBinning,

    #[error("binning input contains {count} non-finite values")]
    NonFinite { count: u64 },

    #[error("density grid axis has zero resolution")]
    ZeroResolution,

    #[error("{path}: not a valid incidence cache: {detail}")]
    BadCache { path: PathBuf, detail: String },

    #[error("generator config: {0}")]
    Config(String),

    #[error("infeasible generator setup: {0}")]
    Infeasible(String),

    #[error("exhaustive search limited to 32 likes over 16 pages, got {likes} over {pages}")]
    SearchTooLarge { likes: u64, pages: u64 },

    #[error("empty input: {0}")]
    EmptyInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
