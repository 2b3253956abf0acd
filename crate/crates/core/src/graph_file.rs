//! Graph/profile documents:
//!
//! ```yaml
//! seller: S
//! buyers:
//!   - { id: a, valuation: 3, neighbors: [S, b] }
//!   - { id: b, valuation: 7, neighbors: [] }
//! ```
//!
//! Neighbor lists may be symmetric or one-sided; a tie listed by either end
//! connects both. JSON documents are accepted as well.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{BuyerProfile, Network, NetworkError};

#[derive(Debug, Error)]
pub enum GraphFileError {
    #[error("cannot parse graph document: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub seller: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seller_neighbors: Vec<String>,
    pub buyers: Vec<BuyerProfile>,
}

impl GraphFile {
    pub fn parse(text: &str) -> Result<Self, GraphFileError> {
        Ok(serde_yaml::from_str(text)?)
    }

    pub fn to_network(&self) -> Result<Network, NetworkError> {
        Network::new(&self.seller, &self.seller_neighbors, &self.buyers)
    }

    pub fn from_network(network: &Network) -> Self {
        Self {
            seller: network.name(crate::network::SELLER).to_string(),
            seller_neighbors: Vec::new(),
            buyers: network.buyer_profiles(),
        }
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("graph documents always serialize")
    }
}

/// Parses a graph document straight into a [`Network`].
pub fn parse_network(text: &str) -> Result<Network, GraphFileError> {
    Ok(GraphFile::parse(text)?.to_network()?)
}
