use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("particle index {index} out of range for {count} particles")]
    ParticleIndex { index: usize, count: usize },

    #[error("degenerate momentum for particle {particle}: mean |p| is zero, supply a fixed cell length")]
    DegenerateMomentum { particle: usize },

    #[error("numeric blow-up at t = {time}: {detail}")]
    NumericBlowup { time: f64, detail: String },

    #[error("zero support: {0}")]
    ZeroSupport(String),

    #[error("degenerate jump: {0}")]
    DegenerateJump(String),

    #[error("merge aborted: {0}")]
    MergeAborted(String),

    #[error("split aborted: {0}")]
    SplitAborted(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericBlowup { .. }
                | Error::ZeroSupport(_)
                | Error::DegenerateJump(_)
                | Error::DegenerateMomentum { .. }
        )
    }
}
