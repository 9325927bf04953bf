use alloc::string::String;
use core::fmt;

use crate::Date;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors produced by the core engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input violates a domain invariant (message names the offending item).
    Invalid(String),
    /// Two inputs that must agree in shape or length do not.
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A daily index has a hole.
    MissingDate(Date),
    /// A requested date range is not covered by the available data.
    Coverage {
        what: &'static str,
        start: Date,
        end: Date,
    },
    /// Feature names of an input differ from those a model was trained on.
    FeatureMismatch(String),
    /// A name was looked up that does not exist.
    Unknown { kind: &'static str, name: String },
    /// Training diverged (non-finite loss or parameters).
    NonFinite { epoch: usize, detail: String },
    /// Linear model cannot be fitted.
    Singular(String),
    /// A statistical precondition gate failed.
    GateFailed { gate: &'static str, p_value: f64, alpha: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::Shape {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected}, found {found}"),
            Error::MissingDate(d) => write!(f, "missing date {d} in daily index"),
            Error::Coverage { what, start, end } => {
                write!(f, "{what} does not cover {start}..={end}")
            }
            Error::FeatureMismatch(msg) => write!(f, "feature mismatch: {msg}"),
            Error::Unknown { kind, name } => write!(f, "unknown {kind} '{name}'"),
            Error::NonFinite { epoch, detail } => {
                write!(f, "training diverged at epoch {epoch}: {detail}")
            }
            Error::Singular(msg) => write!(f, "singular linear system: {msg}"),
            Error::GateFailed {
                gate,
                p_value,
                alpha,
            } => write!(
                f,
                "significance gate '{gate}' failed: p = {p_value:.4} > alpha = {alpha}"
            ),
        }
    }
}

impl core::error::Error for Error {}
