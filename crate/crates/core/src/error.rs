use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Vector or parameter length does not match the declared shape.
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A non-finite value appeared in a forward or backward pass.
    NonFinite { what: &'static str, index: usize },
    /// Invalid static configuration (empty key list, bad ranges, ...).
    Config(String),
    /// A knowledge policy could not be registered or expanded.
    Knowledge(String),
    /// An action outside the open cube was passed to a density evaluator.
    Density { index: usize, value: f64 },
    /// Non-finite or malformed action passed to an environment.
    Input(String),
    /// A transfer plan is inconsistent with its source or target.
    Transfer { component: &'static str, reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                what,
                expected,
                got,
            } => write!(f, "shape mismatch in {what}: expected {expected}, got {got}"),
            Error::NonFinite { what, index } => {
                write!(f, "non-finite value in {what} at index {index}")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Knowledge(msg) => write!(f, "knowledge error: {msg}"),
            Error::Density { index, value } => write!(
                f,
                "action component {index} = {value} is outside the open interval (-1, 1)"
            ),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Transfer { component, reason } => {
                write!(f, "transfer error in {component}: {reason}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            got,
        })
    }
}
