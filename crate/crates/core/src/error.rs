use thiserror::Error;

use crate::escape::EscapeReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{name} is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NonSymmetric { name: &'static str, asymmetry: f64 },

    #[error("{name} is not invertible")]
    Singular { name: &'static str },

    #[error("finite escape time near t = {:.9}", .0.t_escape.unwrap_or(f64::NAN))]
    FiniteEscape(Box<EscapeReport>),

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("time {t} outside of solution range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("degenerate schedule: escape time {escape} lies within the margin of t0 = {t0}")]
    DegenerateSchedule { escape: f64, t0: f64 },

    #[error("communication instants must be strictly increasing and inside (t0, tf)")]
    UnsortedInstants,

    #[error("no feasible next instance after t = {t_prev}")]
    NoFeasibleInstance { t_prev: f64 },

    #[error("event ordering: {0}")]
    EventOrdering(String),

    #[error("interval [{start}, {end}) contains an escape time at {escape}")]
    InadmissibleInterval { start: f64, end: f64, escape: f64 },

    #[error("interval [{start}, {end}) is admissible; a risky deviation cannot gain")]
    IntervalAdmissible { start: f64, end: f64 },

    #[error("effort budget must be nonnegative, got {0}")]
    NegativeBudget(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for malformed input files or arguments, as opposed to domain
    /// outcomes such as an escape or an inadmissible schedule.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Schema { .. } | Error::Io(_) | Error::InvalidArgument(_)
        )
    }
}
