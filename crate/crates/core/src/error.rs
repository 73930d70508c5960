use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Principal curvatures left the admissibility cone of the curvature function.
    #[error("admissibility error: {0}")]
    Admissibility(String),

    /// Invalid grid, flow or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Loss of star-shapedness or a singular induced metric at a grid node.
    #[error("degenerate geometry at node {node}: {reason}")]
    Degenerate { node: usize, reason: String },

    /// A runtime monitor detected a violated a-priori bound.
    #[error("monitor violation at t = {t}: {reason}")]
    Monitor { t: f64, reason: String },

    /// Malformed text input (config, curvature spec, series file).
    #[error("parse error{}: {message}", location(.line, .key))]
    Parse {
        message: String,
        line: Option<usize>,
        key: Option<String>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location(line: &Option<usize>, key: &Option<String>) -> String {
    match (line, key) {
        (Some(l), Some(k)) => format!(" at line {l} (key `{k}`)"),
        (Some(l), None) => format!(" at line {l}"),
        (None, Some(k)) => format!(" (key `{k}`)"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn parse(message: impl Into<String>) -> Self {
        Error::Parse {
            message: message.into(),
            line: None,
            key: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
