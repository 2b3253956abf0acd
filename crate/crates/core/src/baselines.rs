//! Comparison mechanisms: the information diffusion mechanism (IDM) and a
//! second-price auction among the seller's neighbors only.

use std::collections::BTreeSet;

use crate::network::{build_valid_subgraph, bfs_depths, Network, NodeIx, ReportedProfile, ValidSubgraph, SELLER};
use crate::outcome::{OutcomeAccumulator, OutcomeSummary};
use crate::rng::stream;

use rand::Rng;

/// Cut vertices between the seller and the top bidder, nearest first, each
/// with the set of valid buyers it dominates (itself included).
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSequence {
    pub nodes: Vec<NodeIx>,
    pub dominated: Vec<BTreeSet<NodeIx>>,
}

/// Valid buyers that cannot reach the seller once `removed` is deleted,
/// `removed` included.
fn dominated_by(g: &ValidSubgraph, removed: NodeIx) -> BTreeSet<NodeIx> {
    let depth = bfs_depths(g.node_count(), SELLER, |u| {
        g.neighbors(u).iter().copied().filter(move |&v| v != removed && u != removed)
    });
    g.buyers().filter(|&i| i == removed || depth[i].is_none()).collect()
}

pub fn critical_sequence(g: &ValidSubgraph, z: NodeIx) -> CriticalSequence {
    let mut seq: Vec<(usize, NodeIx, BTreeSet<NodeIx>)> = g
        .buyers()
        .filter_map(|d| {
            let dom = dominated_by(g, d);
            dom.contains(&z).then(|| (usize::MAX - dom.len(), d, dom))
        })
        .collect();
    // Dominated sets along the sequence are nested, so larger sets come first.
    seq.sort_by_key(|(k, d, _)| (*k, *d));
    CriticalSequence {
        nodes: seq.iter().map(|(_, d, _)| *d).collect(),
        dominated: seq.into_iter().map(|(_, _, dom)| dom).collect(),
    }
}

/// IDM winner, net payments and revenue for top bidder `z`.
pub fn idm_outcome(g: &ValidSubgraph, z: NodeIx) -> (NodeIx, Vec<f64>, f64) {
    let cs = critical_sequence(g, z);
    let k = cs.nodes.len();
    let top_outside = |m: usize| {
        if m < k {
            g.top_bid(g.buyers().filter(|i| !cs.dominated[m].contains(i)))
        } else {
            g.top_bid(g.buyers())
        }
    };
    let m = (0..k)
        .find(|&m| g.bid(cs.nodes[m]) == top_outside(m + 1))
        .unwrap_or(k - 1);
    let mut payments = vec![0.0; g.node_count()];
    let price = top_outside(m);
    payments[cs.nodes[m]] = price;
    let mut revenue = price;
    for i in 0..m {
        let reward = top_outside(i + 1) - top_outside(i);
        payments[cs.nodes[i]] = -reward;
        revenue -= reward;
    }
    (cs.nodes[m], payments, revenue)
}

/// IDM on the reported profile. Top-bid ties are broken by a seeded draw.
pub fn idm_run(network: &Network, reported: &ReportedProfile, seed: u64) -> OutcomeSummary {
    let g = build_valid_subgraph(reported);
    let mut acc = OutcomeAccumulator::new(network.len());
    let zs = g.top_bidders();
    if !zs.is_empty() {
        let z = if zs.len() == 1 {
            zs[0]
        } else {
            zs[stream(seed, 0).gen_range(0..zs.len())]
        };
        let (w, payments, revenue) = idm_outcome(&g, z);
        acc.add(1.0, Some(w), &payments, revenue);
    } else {
        acc.add(1.0, None, &vec![0.0; network.len()], 0.0);
    }
    acc.count_unit();
    acc.finish(network)
}

/// Second-price auction among the seller's reported neighbors, no diffusion.
/// Ties for the top bid go to the lowest node index; the price is unaffected.
pub fn vcg_neighbors(network: &Network, reported: &ReportedProfile) -> OutcomeSummary {
    let mut acc = OutcomeAccumulator::new(network.len());
    let mut bids: Vec<(NodeIx, f64)> = reported.invited(SELLER).iter().map(|&i| (i, reported.bid(i))).collect();
    bids.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut payments = vec![0.0; network.len()];
    match bids.first() {
        Some(&(w, _)) => {
            let price = bids.get(1).map_or(0.0, |b| b.1);
            payments[w] = price;
            acc.add(1.0, Some(w), &payments, price);
        }
        None => acc.add(1.0, None, &payments, 0.0),
    }
    acc.count_unit();
    acc.finish(network)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{instance_a, instance_b};
    use crate::network::tests::net;

    #[test]
    fn idm_instance_a() {
        let n = instance_a();
        let g = build_valid_subgraph(&n.truthful());
        let (a, b) = (1, 2);
        let cs = critical_sequence(&g, b);
        assert_eq!(cs.nodes, vec![a, b]);
        assert_eq!(cs.dominated[0], BTreeSet::from([a, b]));
        assert_eq!(cs.dominated[1], BTreeSet::from([b]));
        let s = idm_run(&n, &n.truthful(), 0);
        let row = s.by_id("a").unwrap();
        assert_eq!((row.win_probability, row.expected_payment), (1.0, 2.0));
        assert_eq!(s.revenue, 2.0);
    }

    #[test]
    fn idm_instance_b() {
        let n = instance_b();
        let g = build_valid_subgraph(&n.truthful());
        assert_eq!(critical_sequence(&g, 2).nodes, vec![2]);
        let s = idm_run(&n, &n.truthful(), 0);
        let b = s.by_id("b").unwrap();
        assert_eq!((b.win_probability, b.expected_payment), (1.0, 2.0));
        for id in ["a", "c"] {
            let r = s.by_id(id).unwrap();
            assert_eq!((r.win_probability, r.expected_payment, r.expected_utility), (0.0, 0.0, 0.0));
        }
        assert_eq!(s.revenue, 2.0);
    }

    #[test]
    fn idm_rewards_intermediaries() {
        // S - a - b - c with a side branch y under a; a and b are critical.
        let n = net(
            &["a"],
            &[("a", 1.0, &["b", "y"]), ("b", 2.0, &["c"]), ("c", 5.0, &[]), ("y", 4.0, &[])],
        );
        let s = idm_run(&n, &n.truthful(), 0);
        let (a, b, c) = (s.by_id("a").unwrap(), s.by_id("b").unwrap(), s.by_id("c").unwrap());
        assert_eq!(c.win_probability, 1.0);
        assert_eq!(c.expected_payment, 4.0);
        assert_eq!(a.expected_payment, -4.0);
        assert_eq!(b.expected_payment, 0.0);
        assert_eq!(s.by_id("y").unwrap().expected_utility, 0.0);
        assert_eq!(s.revenue, 0.0);
    }

    #[test]
    fn idm_first_critical_node_keeps_on_a_line() {
        let n = net(&["a"], &[("a", 1.0, &["b"]), ("b", 2.0, &["c"]), ("c", 5.0, &[])]);
        let s = idm_run(&n, &n.truthful(), 0);
        let a = s.by_id("a").unwrap();
        assert_eq!((a.win_probability, a.expected_payment), (1.0, 0.0));
    }

    #[test]
    fn idm_single_buyer() {
        let n = net(&["a"], &[("a", 4.0, &[])]);
        let s = idm_run(&n, &n.truthful(), 0);
        assert_eq!((s.buyer(1).win_probability, s.buyer(1).expected_payment), (1.0, 0.0));
    }

    #[test]
    fn vcg_examples() {
        let s = vcg_neighbors(&instance_a(), &instance_a().truthful());
        assert_eq!(s.by_id("a").unwrap().expected_payment, 2.0);
        assert_eq!(s.revenue, 2.0);
        let s = vcg_neighbors(&instance_b(), &instance_b().truthful());
        let c = s.by_id("c").unwrap();
        assert_eq!((c.win_probability, c.expected_payment), (1.0, 1.0));
        assert_eq!(s.revenue, 1.0);
        let n = net(&["a"], &[("a", 5.0, &[])]);
        let s = vcg_neighbors(&n, &n.truthful());
        assert_eq!((s.buyer(1).win_probability, s.revenue), (1.0, 0.0));
        let n = net(&[], &[("a", 5.0, &[])]);
        let s = vcg_neighbors(&n, &n.truthful());
        assert_eq!((s.buyer(1).win_probability, s.revenue), (0.0, 0.0));
    }
}
