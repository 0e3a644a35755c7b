use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A state became NaN or infinite during integration.
    #[error("integration blew up at grid index {index} (t = {time})")]
    IntegrationBlowup { index: usize, time: f64 },

    #[error("measurement at t = {t} with look-ahead {delta} leaves the horizon T = {horizon}")]
    OutOfHorizon { t: f64, delta: f64, horizon: f64 },

    #[error("conditional expectation {value:e} is degenerate at measurement index {index}")]
    DegenerateConditional { index: usize, value: f64 },

    /// An optimistic plan was requested over an empty confidence set.
    #[error("planner starved: the {which} confidence set is empty")]
    PlannerStarvation { which: &'static str },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_episode(self, episode: usize) -> Self {
        match self {
            e @ Error::Episode { .. } => e,
            e => Error::Episode {
                episode,
                source: Box::new(e),
            },
        }
    }
}
