use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate region: {cells} cell(s) inside the disc, need at least 2")]
    DegenerateRegion { cells: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schedule ramps overlap: [{}, {}] and [{}, {}]", first.0, first.1, second.0, second.1)]
    OverlappingRamps {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("node index {index} out of range for {len} nodes")]
    NodeOutOfRange { index: usize, len: usize },

    #[error("overlay is not strongly connected: {reachable} of {total} nodes reachable from the center")]
    NotStronglyConnected { reachable: usize, total: usize },

    #[error("isolated origin: node {0} has zero outgoing weight")]
    IsolatedOrigin(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix sequence out of order: expected step {expected}, got {got}")]
    StepOrder { expected: usize, got: usize },

    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("window [{start}, {end}) is not covered by the available matrices")]
    WindowOutOfRange { start: usize, end: usize },

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
