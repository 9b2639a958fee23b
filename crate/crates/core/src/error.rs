//! Error type shared across the crate.
//!
//! Variants carry enough context (field names, indices, offending values) to
//! point at the exact datum that broke, and classify into coarse kinds so a
//! caller can map failures to exit codes without matching every variant.

use std::path::PathBuf;

/// Coarse failure class, used by drivers to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input data (files, dimensions, values).
    Input,
    /// Numerical failure while solving (degenerate geometry, non-finite math).
    Numerical,
    /// Filesystem-level failure.
    Io,
}

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    /// A field holds the wrong number of entries.
    #[error("{field}: expected {expected} entries, got {got}")]
    Dimension {
        field: String,
        expected: usize,
        got: usize,
    },

    /// A single entry violates a structural invariant.
    #[error("{field}[{index}]: {detail}")]
    InvalidValue {
        field: String,
        index: usize,
        detail: String,
    },

    /// A 3D point sits at or behind the camera plane.
    #[error("point {index} has non-positive depth {z}")]
    NonPositiveDepth { index: usize, z: f64 },

    /// Too few usable points to determine a rigid alignment.
    #[error("{context}: {got} usable points, need at least {needed}")]
    TooFewPoints {
        context: String,
        got: usize,
        needed: usize,
    },

    /// Point sets too degenerate (collinear or collapsed) to pin a rotation.
    #[error("{context}: covariance is rank-deficient, rotation underdetermined")]
    DegenerateCovariance { context: String },

    /// A computation produced NaN or infinity.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },
}

impl Error {
    /// Classify the failure for exit-code mapping.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Parse { .. }
            | Error::Dimension { .. }
            | Error::InvalidValue { .. }
            | Error::NonPositiveDepth { .. } => ErrorKind::Input,
            Error::TooFewPoints { .. }
            | Error::DegenerateCovariance { .. }
            | Error::NonFinite { .. } => ErrorKind::Numerical,
        }
    }

    /// Attach a segment index to alignment errors raised inside a per-segment loop.
    pub fn with_segment(self, segment: usize) -> Error {
        match self {
            Error::TooFewPoints { context, got, needed } => Error::TooFewPoints {
                context: format!("segment {segment} ({context})"),
                got,
                needed,
            },
            Error::DegenerateCovariance { context } => Error::DegenerateCovariance {
                context: format!("segment {segment} ({context})"),
            },
            other => other,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
