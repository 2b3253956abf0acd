use std::fmt::Write as _;

use super::aggregation::AggregationForest;
use super::auction::{local_auction, LocalAuctionResult, PriceRule};
use super::diffusion::DiffusionGraph;
use super::ledger::Ledger;
use super::EngineError;
use crate::network::{Network, NodeIx, ValidSubgraph, SELLER};
use crate::rng::auction_rng;

/// Who joins a local auction.
#[derive(Debug, Clone, Copy)]
pub enum ParticipantRule<'a> {
    /// The host's Stage-1 invitees (the distributed protocol).
    Invitees(&'a DiffusionGraph),
    /// Every neighbor of the host in G(θ') that has not held the item yet.
    /// Used when a resale is replayed on an arbitrary spanning tree.
    Neighbors(&'a ValidSubgraph),
}

/// Inputs of top-down allocation besides the forest.
#[derive(Debug, Clone, Copy)]
pub struct Stage3<'a> {
    pub participants: ParticipantRule<'a>,
    /// Bids hosts compare against the selling price when deciding to keep.
    pub host_bids: &'a [f64],
    /// Amount each host adds to her purchasing price when claiming a reserve.
    pub reserve_markup: Option<&'a [f64]>,
    pub price_rule: PriceRule,
    /// Break top-bid ties toward the participant whose branch holds this node.
    pub prefer_toward: Option<NodeIx>,
}

/// Full record of a run of top-down allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResaleTrace {
    pub auctions: Vec<LocalAuctionResult>,
    /// Item holders from the seller to the final holder.
    pub resale_path: Vec<NodeIx>,
    /// Final holder, `None` when the seller keeps the item.
    pub winner: Option<NodeIx>,
    /// Net payment per node (negative means the node was paid).
    pub payments: Vec<f64>,
    pub revenue: f64,
}

impl ResaleTrace {
    pub fn allocation(&self, node: NodeIx) -> f64 {
        if self.winner == Some(node) {
            1.0
        } else {
            0.0
        }
    }

    /// u_i = π_i·v_i − p_i with the given (true) valuation.
    pub fn utility(&self, node: NodeIx, valuation: f64) -> f64 {
        self.allocation(node) * valuation - self.payments[node]
    }

    pub fn utilities(&self, network: &Network) -> Vec<f64> {
        (0..network.len())
            .map(|i| if i == SELLER { self.revenue } else { self.utility(i, network.valuation(i)) })
            .collect()
    }

    /// Line-oriented text form, one line per local auction plus a summary.
    pub fn render(&self, network: &Network) -> String {
        let name = |i: NodeIx| network.name(i);
        let mut out = String::new();
        for (k, a) in self.auctions.iter().enumerate() {
            let bids: Vec<String> = a.bids.iter().map(|&(i, b)| format!("{}:{}", name(i), b)).collect();
            let _ = writeln!(
                out,
                "auction {} host={} reserve={} bids=[{}] winner={} price={}",
                k + 1,
                name(a.host),
                a.reserve,
                bids.join(", "),
                a.winner.map_or("-", name),
                a.price
            );
        }
        let path: Vec<&str> = self.resale_path.iter().map(|&i| name(i)).collect();
        let _ = writeln!(
            out,
            "result winner={} revenue={} path={}",
            self.winner.map_or("-", name),
            self.revenue,
            path.join(">")
        );
        for i in network.buyers() {
            if self.payments[i] != 0.0 {
                let _ = writeln!(out, "payment {}={}", name(i), self.payments[i]);
            }
        }
        out
    }
}

/// Resale loop: the holder re-parents her participants, runs a local auction
/// with her purchasing price as reserve, and either sells (the winner hosts
/// next) or keeps the item, which ends the run.
pub fn run_stage3_allocation(
    forest: &mut AggregationForest,
    stage: &Stage3<'_>,
    ledger: &mut Ledger,
    seed: u64,
) -> Result<ResaleTrace, EngineError> {
    let n = stage.host_bids.len();
    let mut payments = vec![0.0; n];
    let mut auctions = Vec::new();
    let mut path = vec![SELLER];
    let mut host = SELLER;
    let mut reserve = 0.0;
    let mut revenue = 0.0;
    loop {
        let participants: Vec<NodeIx> = match stage.participants {
            ParticipantRule::Invitees(dg) => dg.invitees(host).to_vec(),
            ParticipantRule::Neighbors(g) => g
                .neighbors(host)
                .iter()
                .copied()
                .filter(|j| !path.contains(j))
                .collect(),
        };
        forest.detach_and_reaggregate(host, &participants);

        let markup = stage.reserve_markup.map_or(0.0, |m| m[host]);
        let claimed = if host == SELLER { 0.0 } else { reserve + markup };
        ledger.verify_reserve(host, claimed)?;

        let preferred = stage
            .prefer_toward
            .and_then(|t| branch_holding(forest, host, t));
        let bids = participants.iter().map(|&j| (j, forest.bid(j))).collect();
        let result = local_auction(
            host,
            host == SELLER,
            stage.host_bids[host],
            claimed,
            bids,
            stage.price_rule,
            preferred,
            &mut auction_rng(seed, host),
        );
        let winner = result.winner;
        let price = result.price;
        auctions.push(result);
        match winner {
            Some(w) => {
                ledger.append(host, w, price);
                payments[w] += price;
                if host == SELLER {
                    revenue = price;
                } else {
                    payments[host] -= price;
                }
                path.push(w);
                host = w;
                reserve = price;
            }
            None => break,
        }
    }
    let winner = path.last().copied().filter(|&w| w != SELLER);
    Ok(ResaleTrace {
        auctions,
        resale_path: path,
        winner,
        payments,
        revenue,
    })
}

/// The child of `host` whose branch contains `target`, if any.
fn branch_holding(forest: &AggregationForest, host: NodeIx, target: NodeIx) -> Option<NodeIx> {
    let mut cur = target;
    for _ in 0..forest.len() {
        let p = *forest.parents(cur).first()?;
        if p == host {
            return Some(cur);
        }
        cur = p;
    }
    None
}
