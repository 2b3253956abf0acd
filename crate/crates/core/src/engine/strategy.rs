use std::fmt;

use serde::{Deserialize, Serialize};

use crate::network::{Network, NetworkError, NodeIx, ReportedProfile, SELLER};

/// Message-passing action: which inviters receive the aggregated bid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PassRule {
    /// Intended action: one inviter drawn uniformly at random.
    RandomInviter,
    /// Report to nobody.
    Nobody,
    /// Report to every inviter.
    AllInviters,
    /// Report to these nodes; entries that are not inviters are ignored.
    Targets(Vec<NodeIx>),
}

/// Computational action: how received bids and the own bid become the
/// aggregated bid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ComputeRule {
    /// Intended action: maximum of received bids and own bid.
    Max,
    /// Always output this value.
    Constant(f64),
    /// Maximum plus an offset, floored at 0.
    Offset(f64),
    /// Ignore received bids.
    OwnBid,
}

impl ComputeRule {
    pub fn apply(self, received: impl Iterator<Item = f64>, own_bid: f64) -> f64 {
        match self {
            Self::Max => received.fold(own_bid, f64::max),
            Self::Constant(x) => x,
            Self::Offset(d) => (received.fold(own_bid, f64::max) + d).max(0.0),
            Self::OwnBid => own_bid,
        }
    }
}

/// One buyer's complete strategy s_i = (t_i, q_i, f_i). The information
/// revelation t_i is the pair (bid, invited).
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub bid: f64,
    pub invited: Vec<NodeIx>,
    pub pass: PassRule,
    pub compute: ComputeRule,
    /// Amount added to the purchasing price claimed when hosting.
    pub reserve_markup: f64,
}

impl Strategy {
    pub fn intended(network: &Network, node: NodeIx) -> Self {
        Self {
            bid: network.valuation(node),
            invited: network.neighbors(node).to_vec(),
            pass: PassRule::RandomInviter,
            compute: ComputeRule::Max,
            reserve_markup: 0.0,
        }
    }
}

/// A strategy for every node; the seller's entry is fixed to the intended one.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    reported: ReportedProfile,
    pass: Vec<PassRule>,
    compute: Vec<ComputeRule>,
    reserve_markup: Vec<f64>,
}

impl StrategyProfile {
    /// s^M: truthful revelation, max aggregation, one random inviter.
    pub fn intended(network: &Network) -> Self {
        let n = network.len();
        Self {
            reported: network.truthful(),
            pass: vec![PassRule::RandomInviter; n],
            compute: vec![ComputeRule::Max; n],
            reserve_markup: vec![0.0; n],
        }
    }

    /// Intended q and f for everyone on top of the given reports.
    pub fn from_reports(reported: ReportedProfile) -> Self {
        let n = reported.len();
        Self {
            reported,
            pass: vec![PassRule::RandomInviter; n],
            compute: vec![ComputeRule::Max; n],
            reserve_markup: vec![0.0; n],
        }
    }

    /// Replaces one buyer's strategy. The seller cannot deviate.
    pub fn with_strategy(
        mut self,
        network: &Network,
        node: NodeIx,
        strategy: Strategy,
    ) -> Result<Self, NetworkError> {
        if node == SELLER {
            return Ok(self);
        }
        self.reported.set_bid(network, node, strategy.bid)?;
        self.reported.set_invited(network, node, strategy.invited)?;
        self.pass[node] = strategy.pass;
        self.compute[node] = strategy.compute;
        self.reserve_markup[node] = strategy.reserve_markup;
        Ok(self)
    }

    pub fn reported(&self) -> &ReportedProfile {
        &self.reported
    }

    pub fn pass(&self, node: NodeIx) -> &PassRule {
        &self.pass[node]
    }

    pub fn compute(&self, node: NodeIx) -> ComputeRule {
        self.compute[node]
    }

    pub fn compute_rules(&self) -> &[ComputeRule] {
        &self.compute
    }

    pub fn reserve_markup(&self, node: NodeIx) -> f64 {
        self.reserve_markup[node]
    }

    /// True when every buyer uses intended q and f.
    pub fn has_intended_pass_and_compute(&self) -> bool {
        self.pass.iter().all(|p| *p == PassRule::RandomInviter)
            && self.compute.iter().all(|c| *c == ComputeRule::Max)
    }
}

impl fmt::Display for PassRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RandomInviter => write!(f, "random-inviter"),
            Self::Nobody => write!(f, "nobody"),
            Self::AllInviters => write!(f, "all-inviters"),
            Self::Targets(t) => write!(f, "targets{t:?}"),
        }
    }
}

impl fmt::Display for ComputeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Max => write!(f, "max"),
            Self::Constant(x) => write!(f, "constant({x})"),
            Self::Offset(d) => write!(f, "offset({d})"),
            Self::OwnBid => write!(f, "own-bid"),
        }
    }
}
