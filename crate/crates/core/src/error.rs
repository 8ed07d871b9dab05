use std::fmt;

use crate::validate::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Indices or table shapes that do not agree with the spaces they are used with.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A feature was requested that the inputs were not built for (e.g. a missing factorization).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// An enumeration or closure would exceed the size guard.
    #[error("size guard exceeded: {what} would have {count} members (limit {limit})")]
    Resource {
        what: &'static str,
        count: SizeCount,
        limit: usize,
    },

    #[error("invalid input: {}", ViolationList(.0))]
    Invalid(Vec<Violation>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn check(violations: Vec<Violation>) -> Result<()> {
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(violations))
        }
    }
}

/// Member count reported by the size guard; saturates instead of overflowing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeCount {
    Exact(u128),
    Overflow,
}

impl fmt::Display for SizeCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeCount::Exact(n) => write!(f, "{n}"),
            SizeCount::Overflow => write!(f, "more than 2^128"),
        }
    }
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 5;
        for (i, v) in self.0.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        if self.0.len() > SHOWN {
            write!(f, "; and {} more", self.0.len() - SHOWN)?;
        }
        Ok(())
    }
}
