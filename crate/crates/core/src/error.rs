use thiserror::Error;

use crate::model::ModeId;

/// Errors raised by the library. Assumption violations found by the
/// validators are report entries, not errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("unknown mode id {0}")]
    UnknownMode(ModeId),

    #[error("unknown edge index {0}")]
    UnknownEdge(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("hyperplane normal is degenerate (norm {0:e})")]
    DegenerateNormal(f64),

    #[error("time {t} is outside the control horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("point lies on the discontinuity surface of edge {edge} (|g| = {value:e})")]
    OnDiscontinuity { edge: usize, value: f64 },

    #[error("point is outside the chart of edge {edge}")]
    OutsideChart { edge: usize },

    #[error("attach-map Jacobian of edge {edge} is singular (rcond {rcond:e})")]
    ChartSingular { edge: usize, rcond: f64 },

    #[error("point is not in the overlap of charts {from} and {to}")]
    NotInOverlap { from: usize, to: usize },

    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),

    #[error("degenerate sliding denominator |grad g . (f1 - f2)| = {0:e}")]
    DivisionDegenerate(f64),

    #[error("sliding preconditions violated: rates ({0:e}, {1:e})")]
    NotSliding(f64, f64),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("Newton iteration diverged at t = {t}")]
    NewtonDivergence { t: f64 },

    #[error("event function has no sign change on [{t0}, {t1}]")]
    NoSignChange { t0: f64, t1: f64 },

    #[error("state left every domain at t = {t} in mode {mode}")]
    LeftAllDomains { t: f64, mode: ModeId },

    #[error("repelling sliding at t = {t} on edge {edge}: continuation is not unique")]
    NonUniqueContinuation { t: f64, edge: usize },

    #[error("tangent/degenerate surface contact at t = {t} on edge {edge}, rates ({rate_source:e}, {rate_target:e})")]
    TangentDegenerate {
        t: f64,
        edge: usize,
        rate_source: f64,
        rate_target: f64,
    },

    #[error("relaxed strips overlap at t = {t}; corner relaxation is only available as a field evaluator")]
    OverlappingStrips { t: f64 },

    #[error("transversality violated on edge {edge}: {violations} of {samples} samples fail")]
    Transversality { edge: usize, violations: usize, samples: usize },

    #[error("event budget of {0} exhausted")]
    EventBudget(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
