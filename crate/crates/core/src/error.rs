use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("performance function undefined (link {link:?}): power {power} with capacity {capacity}")]
    UndefinedPerformance {
        link: Option<usize>,
        capacity: f64,
        power: f64,
    },

    #[error("dimension mismatch: expected {expected} entries, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid link index {0}")]
    InvalidLink(usize),

    #[error("invalid node id {0}")]
    InvalidNode(usize),

    #[error("empty path")]
    EmptyPath,

    #[error("negative travel time {time} on link {link}")]
    NegativeTime { link: usize, time: f64 },

    #[error("destination {destination} unreachable from origin {origin}")]
    Unreachable { origin: usize, destination: usize },

    #[error("OD pair ({origin}, {destination}) has zero demand")]
    ZeroDemand { origin: usize, destination: usize },

    #[error("OD pair ({origin}, {destination}) has zero shortest travel time")]
    DegenerateOd { origin: usize, destination: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
