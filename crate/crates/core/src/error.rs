use thiserror::Error;

use crate::fibergrid::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Records handed to one group disagree on a configuration field.
    #[error("records disagree on `{field}`")]
    MixedConfiguration { field: &'static str },

    #[error("no measurement records for {0} propagation")]
    MissingDirection(crate::fibergrid::Direction),

    #[error("degenerate calibration: {0}")]
    DegenerateCalibration(String),

    #[error("demand exceeds grid capacity by {shortfall} channel(s)")]
    Capacity { shortfall: usize },

    #[error("invalid plan: {}", join_violations(.0))]
    InvalidPlan(Vec<Violation>),

    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    /// An inner error, tagged with the sweep coordinate where it happened.
    #[error("at x = {x}: {source}")]
    AtPoint { x: f64, source: Box<Error> },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// The innermost error, looking through sweep-point tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPoint { source, .. } => source.root(),
            other => other,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
