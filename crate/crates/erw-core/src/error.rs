use std::fmt;

/// Errors surfaced by environment queries, the transition dynamic program,
/// and the simulators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument was outside the operation's domain (e.g. cookie index 0).
    Domain(String),
    /// The environment cannot answer the query (e.g. a custom rule that
    /// declares no tail bound).
    Unsupported(String),
    /// An iterative computation did not reach the requested tolerance.
    /// `best` is the tightest bound (or smallest residual mass) achieved.
    Convergence { what: &'static str, best: f64, requested: f64 },
    /// A configured resource cap would be exceeded.
    Resource { what: &'static str, cap: u64 },
    /// Two redundant computations of the same quantity disagreed beyond
    /// rounding, which signals a broken environment rule.
    Inconsistent(String),
    /// A variance too small to form the drift/variance ratio.
    DegenerateVariance { nu: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported capability: {msg}"),
            Error::Convergence { what, best, requested } => write!(
                f,
                "{what} did not converge: best bound {best:e}, requested {requested:e}"
            ),
            Error::Resource { what, cap } => {
                write!(f, "resource cap exceeded: {what} (cap {cap})")
            }
            Error::Inconsistent(msg) => write!(f, "consistency check failed: {msg}"),
            Error::DegenerateVariance { nu } => {
                write!(f, "normalized variance {nu:e} too small to form theta")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
