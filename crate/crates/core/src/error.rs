use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("PGM parse error at byte {offset}: {reason}")]
    Pgm { offset: usize, reason: String },

    #[error("IDX parse error: {0}")]
    Idx(String),

    #[error("could not place glyph {glyph} after {attempts} attempts (frame too small)")]
    Placement { glyph: usize, attempts: usize },

    #[error("I/O error on frame {frame}{}: {source}", path.as_ref().map(|p| format!(" ({})", p.display())).unwrap_or_default())]
    FrameIo {
        frame: usize,
        path: Option<PathBuf>,
        #[source]
        source: std::io::Error,
    },

    #[error("stream source error: {0}")]
    Source(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gaze state required for {0} density")]
    MissingGaze(&'static str),

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("non-finite value in {term}")]
    Numerical { term: &'static str },

    #[error("integration diverged at frame {frame}: non-finite {what}")]
    Integration { frame: usize, what: &'static str },

    #[error("linear solver failed: {reason} (condition estimate {condition:.3e})")]
    Solver { reason: String, condition: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
