//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or scenario field violated its documented constraint.
    /// `field` is the dotted path of the offending value.
    #[error("invalid {field}: {constraint}")]
    Validation { field: String, constraint: String },

    /// A query or update referenced a position outside the grid.
    #[error("position ({x:.2}, {y:.2}) is outside the map bounds")]
    OutOfBounds { x: f64, y: f64 },

    /// The planner found no traversable route between the endpoints.
    #[error("no traversable route from ({0:.2}, {1:.2}) to ({2:.2}, {3:.2})", .start.0, .start.1, .goal.0, .goal.1)]
    Unreachable { start: (f64, f64), goal: (f64, f64) },

    /// A message named a recipient that no agent has.
    #[error("unknown message recipient {0:?}")]
    UnknownRecipient(String),

    /// An event log failed an integrity check (e.g. completion without assignment).
    #[error("event log integrity: {0}")]
    LogIntegrity(String),

    #[error("scenario parse: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}
