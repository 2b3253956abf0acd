use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sra_core::crm::{TreeDistribution, DEFAULT_TREE_SAMPLES};
use sra_core::graph_file::parse_network;
use sra_core::instances::{builtin, ValuationModel};
use sra_core::network::Network;

use crate::CliError;

pub const DEFAULT_INSTANCE_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Sra,
    Crm,
    Idm,
    Vcg,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [Self::Sra, Self::Crm, Self::Idm, Self::Vcg];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sra => "sra",
            Self::Crm => "crm",
            Self::Idm => "idm",
            Self::Vcg => "vcg",
        }
    }
}

/// Experiment settings. Every field is optional in the file; command-line
/// flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: String,
    pub valuation: ValuationModel,
    pub samples: u64,
    pub tree_samples: u64,
    pub seed: u64,
    pub mechanisms: Vec<Mechanism>,
    #[serde(with = "distribution")]
    pub tree_distribution: TreeDistribution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph: "grid13".into(),
            valuation: ValuationModel::depth_uniform_default(),
            samples: DEFAULT_INSTANCE_SAMPLES,
            tree_samples: DEFAULT_TREE_SAMPLES,
            seed: 0,
            mechanisms: Mechanism::ALL.to_vec(),
            tree_distribution: TreeDistribution::UniformTrees,
        }
    }
}

/// `uniform` / `invitation` in files and on the command line.
pub mod distribution {
    use serde::{Deserialize, Deserializer, Serializer};
    use sra_core::crm::TreeDistribution;

    pub fn parse(s: &str) -> Result<TreeDistribution, String> {
        match s {
            "uniform" | "uniform_trees" => Ok(TreeDistribution::UniformTrees),
            "invitation" | "invitation_weighted" => Ok(TreeDistribution::InvitationWeighted),
            other => Err(format!("unknown tree distribution `{other}` (expected uniform or invitation)")),
        }
    }

    pub fn name(d: TreeDistribution) -> &'static str {
        match d {
            TreeDistribution::UniformTrees => "uniform",
            TreeDistribution::InvitationWeighted => "invitation",
        }
    }

    pub fn serialize<S: Serializer>(d: &TreeDistribution, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(name(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TreeDistribution, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Loads a config file; a relative `graph` path is resolved against the
/// config's directory when it does not exist relative to the working
/// directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig = serde_yaml::from_str(&read(path)?).map_err(|source| CliError::Config {
        path: path.display().to_string(),
        source,
    })?;
    let g = PathBuf::from(&cfg.graph);
    if g.is_relative() && !g.exists() {
        if let Some(dir) = path.parent() {
            let candidate = dir.join(&g);
            if candidate.exists() {
                cfg.graph = candidate.display().to_string();
            }
        }
    }
    Ok(cfg)
}

/// A graph file path or the name of a built-in graph.
pub fn load_graph(graph: &str) -> Result<Network, CliError> {
    let path = Path::new(graph);
    if path.is_file() {
        return parse_network(&read(path)?).map_err(|source| CliError::Graph {
            path: graph.to_string(),
            source,
        });
    }
    builtin(graph).ok_or_else(|| CliError::UnknownGraph(graph.to_string()))
}

pub fn require_connected(network: &Network) -> Result<(), CliError> {
    let depths = network.depths();
    let missing: Vec<&str> = network
        .buyers()
        .filter(|&i| depths[i].is_none())
        .map(|i| network.name(i))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Disconnected(missing.join(", ")))
    }
}
