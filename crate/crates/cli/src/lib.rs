//! Runner behind the `sra` binary: graph and config loading, experiments
//! and property-suite drivers.

pub mod config;
pub mod experiment;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("`{0}` is neither a readable graph file nor a built-in graph (instance_a, instance_b, grid13)")]
    UnknownGraph(String),
    #[error("invalid graph `{path}`: {source}")]
    Graph {
        path: String,
        source: sra_core::graph_file::GraphFileError,
    },
    #[error("invalid config `{path}`: {source}")]
    Config {
        path: String,
        source: serde_yaml::Error,
    },
    #[error("graph is disconnected from the seller; unreachable buyers: {0}")]
    Disconnected(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Crm(#[from] sra_core::crm::CrmError),
    #[error(transparent)]
    Engine(#[from] sra_core::engine::EngineError),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
