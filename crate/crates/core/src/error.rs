use alloc::string::String;
use core::fmt;

/// Error type shared by all modules of the crate.
///
/// Variants are grouped by how a driver should react: bad parameters,
/// configured resource ceilings, and numeric/degenerate conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A parameter is outside its documented domain (support violations,
    /// malformed grids, out-of-range inputs).
    InvalidInput(String),
    /// A configured ceiling would be exceeded (table size, enumeration size).
    ResourceLimit(String),
    /// A numeric or degenerate condition: coincident points, recursion
    /// depth exhaustion, log-range overflow.
    Numeric(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::ResourceLimit(msg) => write!(f, "resource limit: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidInput(alloc::format!($($arg)*))
    };
}
macro_rules! numeric {
    ($($arg:tt)*) => {
        $crate::Error::Numeric(alloc::format!($($arg)*))
    };
}
macro_rules! resource {
    ($($arg:tt)*) => {
        $crate::Error::ResourceLimit(alloc::format!($($arg)*))
    };
}

pub(crate) use {invalid, numeric, resource};
