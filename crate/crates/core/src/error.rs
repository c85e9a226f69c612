use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// `Config` covers everything that can be rejected before numerics run
/// (malformed scenario files, out-of-range parameters, dimension mismatches).
/// `Numerical` covers non-finite values produced mid-computation and carries
/// enough context to locate the failing step.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error in {context}: {message}")]
    Numerical {
        context: &'static str,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(context: &'static str, msg: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
