//! Crate-wide error type.

use std::path::PathBuf;

/// Coarse error class used by the CLI to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad flags, config files, or argument invariants (exit 2).
    Config,
    /// Bad or insufficient input data (exit 3).
    Data,
    /// Numerical failure during estimation (exit 4).
    Numerical,
}

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// File could not be read or written.
    #[error("io error on {path}: {source}")]
    Io {
        /// Offending path.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },

    /// A CSV row failed to parse under the documented schema.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        /// Offending file.
        path: PathBuf,
        /// 1-based line number (0 when unknown).
        line: u64,
        /// What went wrong.
        message: String,
    },

    /// A zip code appears more than once in the zip map.
    #[error("duplicate zip '{zip}' in zip map")]
    DuplicateZip {
        /// The repeated zip code.
        zip: String,
    },

    /// A zip map entry references a unit absent from the census data.
    #[error("zip map references unknown unit '{unit_id}'")]
    UnknownUnit {
        /// The unknown unit id.
        unit_id: String,
    },

    /// Attestation records carry zips absent from the zip map.
    #[error("unmapped zips in attestation data: {}", zips.join(", "))]
    UnmappedZips {
        /// Offending zips, sorted and deduplicated.
        zips: Vec<String>,
    },

    /// A unit's census series has holes inside the panel calendar.
    #[error("calendar gap for unit '{unit_id}': missing {}", format_dates(missing))]
    CalendarGap {
        /// Unit with missing days.
        unit_id: String,
        /// The missing dates.
        missing: Vec<chrono::NaiveDate>,
    },

    /// Source date ranges do not overlap.
    #[error("attestation and census date ranges have an empty intersection")]
    EmptyIntersection,

    /// A record violates a schema invariant.
    #[error("invalid record: {0}")]
    InvalidRecord(String),

    /// A series is shorter than the operation requires.
    #[error("series too short: need at least {needed} periods, got {got}")]
    SeriesTooShort {
        /// Minimum length.
        needed: usize,
        /// Actual length.
        got: usize,
    },

    /// log(v + offset) requested with v + offset <= 0.
    #[error("cannot take log of non-positive value {value} (offset {offset})")]
    NonpositiveLog {
        /// Offending value.
        value: f64,
        /// Offset in use.
        offset: f64,
    },

    /// Not enough periods for the requested split or lag sweep.
    #[error("insufficient length: {0}")]
    InsufficientLength(String),

    /// Design matrix is rank deficient.
    #[error("rank-deficient design: column {column} is linearly dependent on earlier columns{}", hint.as_deref().map(|h| format!(" ({h})")).unwrap_or_default())]
    RankDeficient {
        /// First dependent column index.
        column: usize,
        /// Actionable context, e.g. the offending unit.
        hint: Option<String>,
    },

    /// Units do not share a common effective sample length.
    #[error("unbalanced panel: effective lengths differ across units ({0})")]
    UnbalancedPanel(String),

    /// Effective length too small for the fixed-T standardization moments.
    #[error("moment condition violated: need effective length > {needed}, got {t_eff} (lag order {lag_order})")]
    MomentCondition {
        /// Required strict lower bound, 5 + 3K.
        needed: usize,
        /// Available effective length.
        t_eff: usize,
        /// Lag order.
        lag_order: usize,
    },

    /// Vectors that must align do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch {
        /// First length.
        left: usize,
        /// Second length.
        right: usize,
    },

    /// WMAPE denominator (sum of actuals) is zero.
    #[error("zero denominator: actual values sum to zero")]
    ZeroDenominator,

    /// Forecast histories shorter than the lag order.
    #[error("history too short: need at least {needed} values, got {got}")]
    HistoryTooShort {
        /// Minimum length (the lag order).
        needed: usize,
        /// Actual length.
        got: usize,
    },

    /// Coefficient index outside the fitted parameter vector.
    #[error("coefficient index {index} out of range (model has {len} coefficients)")]
    IndexOutOfRange {
        /// Requested index.
        index: usize,
        /// Parameter count.
        len: usize,
    },

    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// Mismatch between artifacts that must describe the same panel.
    #[error("alignment error: {0}")]
    Alignment(String),
}

impl Error {
    /// Classify for exit-code mapping.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::IndexOutOfRange { .. } => ErrorClass::Config,
            Error::RankDeficient { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

fn format_dates(dates: &[chrono::NaiveDate]) -> String {
    const SHOWN: usize = 5;
    let mut s = dates
        .iter()
        .take(SHOWN)
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if dates.len() > SHOWN {
        s.push_str(&format!(", ... ({} total)", dates.len()));
    }
    s
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
