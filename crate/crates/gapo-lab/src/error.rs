//! Crate-wide error type.
//!
//! A single enum keeps error plumbing between modules simple; the CLI
//! maps variants onto process exit codes (config and usage problems,
//! verification failures, and numerical failures are distinguished).

use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    /// A configuration value failed validation. `field` names the
    /// offending key so the message is actionable.
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// Configuration file could not be parsed (syntax or unknown keys).
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// A category name is not part of the built-in vocabulary.
    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    /// A requested list length cannot be served by a category pool.
    #[error("category `{category}` holds {available} items, cannot draw lists of length {requested}")]
    ListLength {
        category: String,
        requested: usize,
        available: usize,
    },

    /// Malformed or unusable decode configuration at runtime.
    #[error("decode error: {0}")]
    Decode(String),

    /// Checkpoint container is unusable.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Checkpoint was written by an incompatible format version.
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    /// A loss, gradient, or probability went non-finite; training must
    /// abort rather than continue with poisoned state.
    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    /// One or more independent verification checks failed.
    #[error("verification failed: {0}")]
    Verification(String),

    #[error("malformed dataset record: {0}")]
    DatasetFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Shorthand for a config-field validation failure.
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        LabError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Convenient alias used throughout the crate.
pub type Result<T> = std::result::Result<T, LabError>;
