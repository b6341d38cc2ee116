use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("cluster {0} has no agents")]
    EmptyCluster(usize),

    #[error("cluster {0} is not strongly connected")]
    NotStronglyConnected(usize),

    #[error("cluster {cluster} still not strongly connected after {attempts} samples")]
    GenerationBudgetExceeded { cluster: usize, attempts: usize },

    #[error("agent {agent} has mass {mass:e} at round {round}; estimate unreadable")]
    MassUnderflow { agent: usize, round: usize, mass: f64 },

    #[error("schedule/spec mismatch: {0}")]
    IndexMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not row stochastic (row {row} sums to {sum})")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenario `{scenario}` seed {seed}: {source}")]
    Scenario {
        scenario: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
