use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A row of a raw tick file that could not be parsed.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MalformedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid pre-averaging weight: {0}")]
    InvalidWeight(String),

    #[error("invalid tick series: {0}")]
    InvalidSeries(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rounded price at index {index} is not positive (price before rounding {price})")]
    RoundingDomain { index: usize, price: f64 },

    #[error("evaluation point u0={u0} is outside the interior ({lo}, {hi})")]
    Boundary { u0: f64, lo: f64, hi: f64 },

    #[error("tick window out of range: {side} side short by {deficit} ticks")]
    InsufficientTicks { side: &'static str, deficit: usize },

    #[error("pre-averaging window starting at {start} needs index {needed} but the series has {len} ticks")]
    WindowOutOfRange {
        start: usize,
        needed: usize,
        len: usize,
    },

    #[error("intensity estimate is zero at u0={u0}; noise variance is undefined")]
    DegenerateIntensity { u0: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("{} of {total} rows are malformed (first at line {})", rows.len(), rows.first().map_or(0, |r| r.line))]
    TooManyMalformed { total: usize, rows: Vec<MalformedRow> },

    #[error("no records survived cleaning")]
    EmptySeries,

    #[error("scenario `{name}` aborted: {failed} of {total} replications failed ({first_reason})")]
    ScenarioAborted {
        name: String,
        failed: usize,
        total: usize,
        first_reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable code used for missing grid points.
    pub fn reason_code(&self) -> &'static str {
        match self {
            Error::Boundary { .. } => "boundary",
            Error::InsufficientTicks { .. } | Error::WindowOutOfRange { .. } => "insufficient_ticks",
            Error::DegenerateIntensity { .. } => "degenerate_intensity",
            Error::Domain(_) => "domain",
            _ => "error",
        }
    }
}
