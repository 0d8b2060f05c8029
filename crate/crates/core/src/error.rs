use core::fmt;

/// Errors produced by the accounting library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its documented domain.
    InvalidParameter { name: &'static str, reason: &'static str },
    /// `k > n` or a similar out-of-support argument to a numerical routine.
    Domain(&'static str),
    /// The truncated (r = 2) branch has probability below the underflow floor.
    BranchAbsent,
    /// Two PLDs with different grids or estimate directions were combined.
    GridMismatch,
    /// The instance is too large for exhaustive computation.
    TooLarge { what: &'static str, limit: u64 },
    /// No noise level in the searched range meets the target.
    Uncalibratable,
    /// The tight calibration needed more noise than the naive one.
    ComparisonInverted { sigma_tight: f64, sigma_naive: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::BranchAbsent => f.write_str("truncated branch has zero probability"),
            Error::GridMismatch => f.write_str("privacy loss distributions use different grids"),
            Error::TooLarge { what, limit } => {
                write!(f, "{what} exceeds the exhaustive-computation limit of {limit}")
            }
            Error::Uncalibratable => f.write_str("no noise multiplier in the search range meets the target"),
            Error::ComparisonInverted {
                sigma_tight,
                sigma_naive,
            } => write!(
                f,
                "tight calibration ({sigma_tight}) exceeded naive calibration ({sigma_naive})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
