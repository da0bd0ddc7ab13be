use thiserror::Error;

use crate::alliance::AgentError;
use crate::config::ConfigError;
use crate::embseg::EmbsegError;
use crate::ingest::IngestError;
use crate::novelty::NoveltyError;
use crate::partition::PartitionError;
use crate::ports::PortError;
use crate::selection::SelectionError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Port(#[from] PortError),
    #[error(transparent)]
    Novelty(#[from] NoveltyError),
    #[error(transparent)]
    Embseg(#[from] EmbsegError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
