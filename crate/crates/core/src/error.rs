//! Error types shared across the library.
//!
//! Errors fall into two groups that map onto the CLI exit codes:
//! configuration/validation problems (exit code 1) and runtime aborts of a
//! simulation in progress (exit code 2). Vertex ids in messages are 1-based,
//! matching scenario files.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // --- configuration / validation ---
    #[error("graph: vertex {vertex} out of range 1..={n}")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("graph: self-loop at vertex {0}")]
    SelfLoop(usize),

    #[error("graph: duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("scenario: {0}")]
    Validation(String),

    #[error("scenario parse: {0}")]
    Parse(String),

    #[error("projector input must be a unit vector (norm = {0})")]
    NotUnit(f64),

    #[error("bearing snapshot has no entry for edge ({0}, {1})")]
    MissingBearing(usize, usize),

    #[error("edge ({0}, {1}) is not declared persistently excited")]
    NotPeEdge(usize, usize),

    #[error("analysis window {window} s exceeds the sampled span {span} s")]
    WindowTooLong { window: f64, span: f64 },

    #[error("noise kind {kind} requires dimension {requires}, scenario has d = {d}")]
    NoiseDimension {
        kind: &'static str,
        requires: usize,
        d: usize,
    },

    #[error("trace parse: {0}")]
    TraceFormat(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    // --- runtime aborts ---
    #[error("degenerate bearing on edge ({i}, {j}) at t = {t:.6}: distance {dist:.3e}")]
    DegenerateBearing {
        i: usize,
        j: usize,
        t: f64,
        dist: f64,
    },

    #[error(
        "{observer} Riccati matrix ill-conditioned at t = {t:.6} (lambda_min = {lambda_min:.3e})"
    )]
    IllConditioned {
        observer: String,
        t: f64,
        lambda_min: f64,
    },

    #[error("non-finite value in {what} at t = {t:.6}")]
    NonFinite { what: String, t: f64 },

    #[error("agent {receiver} has no message from neighbor {sender}")]
    MissingMessage { receiver: usize, sender: usize },
}

impl Error {
    /// Exit code the CLI maps this error to: 1 for configuration and
    /// validation problems, 2 for aborts of a running simulation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateBearing { .. }
            | Error::IllConditioned { .. }
            | Error::NonFinite { .. }
            | Error::MissingMessage { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
