use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{field} must be positive, got {value}")]
    NonPositiveField { field: &'static str, value: f64 },

    #[error("{field} must be finite, got {value}")]
    NonFiniteField { field: &'static str, value: f64 },

    #[error("value {value} inconsistent with price x volume = {expected}")]
    InconsistentValue { value: f64, expected: f64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: timestamp goes backwards")]
    OutOfOrderTimestamp { line: u64 },

    #[error("line {line}: {source}")]
    Record { line: u64, source: Box<Error> },

    #[error("empty tape")]
    EmptyTape,

    #[error("empty window")]
    EmptyWindow,

    #[error("window width must be positive")]
    InvalidWidth,

    #[error("tick at {timestamp} ns lies outside window [{start}, {end})")]
    TickOutsideWindow { timestamp: i64, start: i64, end: i64 },

    #[error("ticks are not sorted by timestamp")]
    UnsortedTicks,

    #[error("partition would produce {count} windows (limit {limit})")]
    TooManyWindows { count: u64, limit: u64 },

    #[error("moment order {n_max} outside 1..={cap}")]
    InvalidOrder { n_max: usize, cap: usize },

    #[error("power sums of different orders cannot be merged ({left} vs {right})")]
    OrderMismatch { left: usize, right: usize },

    #[error("power sum of order {order} is not finite")]
    Overflow { order: usize },

    #[error("volume moment of order {order} is zero")]
    DegenerateVolume { order: usize },

    #[error("bad bins: {0}")]
    BadBins(String),

    #[error("order {k} approximation needs {k} price moments, have {available}")]
    InsufficientMoments { k: usize, available: usize },

    #[error("price variance {variance} is negative beyond rounding")]
    NegativeVariance { variance: f64 },

    #[error("unsupported approximation order {k}")]
    UnsupportedOrder { k: usize },

    #[error("zero price variance: the density is a point mass at {mean}")]
    ZeroVariance { mean: f64 },

    #[error("bad grid: {0}")]
    BadGrid(String),

    #[error("estimated inversion error {estimate:e} exceeds {limit:e}")]
    QuadratureFailure { estimate: f64, limit: f64 },

    #[error("bad tape spec: {0}")]
    BadSpec(String),

    #[error("no agent traded inside the window")]
    EmptyWindowAll,

    #[error("agent {agent} has in-window trades without expectations")]
    MissingExpectations { agent: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Strips `Record` wrappers down to the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Record { source, .. } => source.root(),
            other => other,
        }
    }

    /// Line number attached by the tape parser, if any.
    pub fn line(&self) -> Option<u64> {
        match self {
            Error::Parse { line, .. } | Error::OutOfOrderTimestamp { line } | Error::Record { line, .. } => Some(*line),
            _ => None,
        }
    }

    /// Whether the failure is numerical rather than a data or usage problem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Overflow { .. }
                | Error::DegenerateVolume { .. }
                | Error::NegativeVariance { .. }
                | Error::ZeroVariance { .. }
                | Error::QuadratureFailure { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
