use std::path::PathBuf;

/// Errors raised by the processing stages.
///
/// Every variant carries the name of the module it originated in so that
/// front ends can print where a failure came from.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("[{module}] {msg}")]
    Domain { module: &'static str, msg: String },

    #[error("[{module}] configuration error: {msg}")]
    Config { module: &'static str, msg: String },

    #[error("[signal] unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("[signal] parse error at byte offset {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("[{module}] I/O error on {}: {source}", path.display())]
    Io {
        module: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Config {
            module,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(module: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            module,
            path: path.into(),
            source,
        }
    }

    /// Module the error originated in.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Domain { module, .. } | Error::Config { module, .. } | Error::Io { module, .. } => module,
            Error::UnsupportedFormat(_) | Error::Parse { .. } => "signal",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
