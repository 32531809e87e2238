use thiserror::Error;

/// Errors produced by the regime toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("price at index {index} is not strictly positive ({value})")]
    NonPositivePrice { index: usize, value: f64 },

    #[error("invalid threshold pair: lower {lower} must be below upper {upper}")]
    InvalidThresholdPair { lower: f64, upper: f64 },

    #[error("one-sided threshold must be nonzero so that the tail is unambiguous")]
    AmbiguousTail,

    #[error("invalid search parameters: {0}")]
    InvalidParams(String),

    #[error("cannot estimate an emission probability on an empty segment")]
    EmptySegment,

    #[error("no candidate model could be scored")]
    NoModel,

    #[error("no threshold separates the decoded states")]
    NoSeparatingThreshold,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("observation {index} has zero probability under every state")]
    ImpossibleObservation { index: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("cumulative probabilities are not monotone over the sorted ladder")]
    NonMonotoneCdf,

    #[error("timestamps are not sorted at index {index}")]
    UnsortedTimestamps { index: usize },

    #[error("similarity range is degenerate (max equals min); dissimilarity is undefined")]
    DegenerateSimilarity,

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("{patterns} distinct history patterns exceed the cap of {cap}; use a smaller lag")]
    AlphabetExplosion { patterns: usize, cap: usize },

    #[error("malformed csv: {0}")]
    MalformedCsv(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
