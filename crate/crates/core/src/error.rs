use std::io;

use thiserror::Error;

/// Errors produced by the segmentation, loss and training routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("label {label} at pixel ({x}, {y}) is out of range for {num_classes} classes")]
    LabelOutOfRange {
        x: usize,
        y: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("shape mismatch: {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid parts-to-objects mapping: {0}")]
    Mapping(String),

    #[error("invalid probability map: {0}")]
    InvalidProbabilities(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {format} data: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },

    #[error("scene does not fit the canvas: {0}")]
    Sizing(String),

    #[error("non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("{component}: {source}")]
    Component {
        component: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        what: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    /// Wraps the error with the name of the loss term or stage that produced it.
    pub fn in_component(self, component: &'static str) -> Self {
        Error::Component {
            component,
            source: Box::new(self),
        }
    }

    /// True when the failure is numeric (a non-finite value) rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Diverged { .. } => true,
            Error::Component { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
