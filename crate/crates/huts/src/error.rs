//! Crate-wide error type.

/// Errors produced across the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A table row could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// The same (year, age) cell appeared twice in a table.
    #[error("duplicate cell (year {year}, age {age})")]
    DuplicateCell { year: i32, age: u32 },
    /// Inputs do not cover the requested year range.
    #[error("coverage error: {0}")]
    Coverage(String),
    /// Data fails a structural requirement (missing rows, degenerate values).
    #[error("data error: {0}")]
    Data(String),
    /// A numerical fit could not be completed.
    #[error("fit error: {0}")]
    Fit(String),
    /// Mismatched dimensions or truncation orders.
    #[error("shape error: {0}")]
    Shape(String),
    /// A requested component count exceeds the effective rank.
    #[error("rank error: requested {requested} components, effective rank {rank}")]
    Rank { requested: usize, rank: usize },
    /// A query point lies outside the supported domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// An integer size computation overflowed.
    #[error("size error: {0}")]
    Size(String),
    /// Interval records and actuals do not share a grid.
    #[error("alignment error: {0}")]
    Alignment(String),
    /// Not enough observations for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Filesystem failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-parsable category tag, used by the CLI's error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::DuplicateCell { .. } => "duplicate-cell",
            Error::Coverage(_) => "coverage",
            Error::Data(_) => "data",
            Error::Fit(_) => "fit",
            Error::Shape(_) => "shape",
            Error::Rank { .. } => "rank",
            Error::Domain(_) => "domain",
            Error::Size(_) => "size",
            Error::Alignment(_) => "alignment",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
