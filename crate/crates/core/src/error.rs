use std::path::PathBuf;

use crate::gridworld::State;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("state {0} is the terminal goal; no transition is defined from it")]
    StepFromTerminal(State),

    #[error("state {0} lies outside the grid")]
    OutOfBounds(State),

    #[error("need at least 2 sigma snapshots to locate t*, got {0}")]
    TooFewSnapshots(usize),

    #[error("snapshot episode {episode} does not follow last recorded episode {last}")]
    NonMonotoneEpisode { episode: usize, last: usize },

    #[error("seed selection ({strategy}) failed: {reason}")]
    SeedSelection { strategy: &'static str, reason: String },

    #[error(
        "no seed strategy produced a seed set ({0}); increase exploration_episodes or explore_epsilon"
    )]
    AllSeedStrategiesFailed(String),

    #[error("spearman correlation needs at least 3 common finite points, got {0}")]
    TooFewPoints(usize),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
