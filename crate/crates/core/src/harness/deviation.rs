//! Unilateral deviations from the intended strategy.

use std::fmt;

use crate::engine::{ComputeRule, DiffusionGraph, PassRule, Strategy};
use crate::network::{Network, NodeIx};

/// Spacing used to probe either side of a decision boundary.
pub const EPSILON: f64 = 1e-6;

/// Largest neighbor set whose subsets are all tried; above it, only the
/// leave-one-out subsets and the empty set are.
const FULL_SUBSET_DEGREE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum DeviationKind {
    /// Report this bid instead of the valuation.
    Bid(f64),
    /// Invite only these neighbors.
    Neighbors(Vec<NodeIx>),
    Pass(PassRule),
    Compute(ComputeRule),
}

/// How a deviation is compared against the intended strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    /// The realized tree is the same under both arms for every seed, so the
    /// comparison is made seed by seed.
    Exact,
    /// The deviation changes the tree distribution; paired means are compared.
    MonteCarlo,
}

impl DeviationKind {
    pub fn arm(&self) -> Arm {
        match self {
            Self::Bid(_) | Self::Compute(_) => Arm::Exact,
            Self::Neighbors(_) | Self::Pass(_) => Arm::MonteCarlo,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Bid(_) => "bid_misreport",
            Self::Neighbors(_) => "neighbor_subset",
            Self::Pass(_) => "pass_targets",
            Self::Compute(_) => "compute_output",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub buyer: NodeIx,
    pub kind: DeviationKind,
    pub strategy: Strategy,
    pub description: String,
}

impl fmt::Display for Deviation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.description)
    }
}

fn names(network: &Network, nodes: &[NodeIx]) -> String {
    let v: Vec<&str> = nodes.iter().map(|&i| network.name(i)).collect();
    format!("[{}]", v.join(" "))
}

fn describe(network: &Network, kind: &DeviationKind) -> String {
    match kind {
        DeviationKind::Bid(b) => format!("bid={b}"),
        DeviationKind::Neighbors(n) => format!("invite={}", names(network, n)),
        DeviationKind::Pass(PassRule::Targets(t)) => format!("pass=to{}", names(network, t)),
        DeviationKind::Pass(p) => format!("pass={p}"),
        DeviationKind::Compute(c) => format!("compute={c}"),
    }
}

fn push_unique(values: &mut Vec<f64>, x: f64, skip: f64) {
    if x.is_finite() && x >= 0.0 && x != skip && !values.contains(&x) {
        values.push(x);
    }
}

/// Subsets of `items` tried as deviations, excluding `items` itself.
fn proper_subsets(items: &[NodeIx]) -> Vec<Vec<NodeIx>> {
    let k = items.len();
    if k <= FULL_SUBSET_DEGREE {
        (0..(1usize << k) - 1)
            .map(|mask| (0..k).filter(|b| mask >> b & 1 == 1).map(|b| items[b]).collect())
            .collect()
    } else {
        let mut out = vec![Vec::new()];
        for skip in 0..k {
            out.push(items.iter().enumerate().filter(|&(j, _)| j != skip).map(|(_, &x)| x).collect());
        }
        out
    }
}

/// The default deviation battery for `buyer`: bid misreports around every
/// decision boundary, hidden neighbors, alternative message targets and
/// alternative aggregation outputs.
pub fn deviation_battery(network: &Network, dg: &DiffusionGraph, buyer: NodeIx) -> Vec<Deviation> {
    let v = network.valuation(buyer);
    let others: Vec<f64> = network
        .buyers()
        .filter(|&j| j != buyer)
        .map(|j| network.valuation(j))
        .collect();
    let top = network.buyers().map(|j| network.valuation(j)).fold(0.0, f64::max);

    let mut kinds = Vec::new();

    let mut bids = Vec::new();
    for x in [0.0, v / 2.0, 2.0 * top, top + EPSILON, top - EPSILON, v + EPSILON, v - EPSILON] {
        push_unique(&mut bids, x, v);
    }
    for &o in &others {
        push_unique(&mut bids, o + EPSILON, v);
        push_unique(&mut bids, o - EPSILON, v);
    }
    kinds.extend(bids.into_iter().map(DeviationKind::Bid));

    let nbrs = network.neighbors(buyer);
    kinds.extend(proper_subsets(nbrs).into_iter().map(DeviationKind::Neighbors));

    let inviters = dg.inviters(buyer);
    kinds.push(DeviationKind::Pass(PassRule::Nobody));
    if inviters.len() > 1 {
        kinds.push(DeviationKind::Pass(PassRule::AllInviters));
        for &p in inviters {
            kinds.push(DeviationKind::Pass(PassRule::Targets(vec![p])));
        }
        for s in proper_subsets(inviters).into_iter().filter(|s| s.len() > 1) {
            kinds.push(DeviationKind::Pass(PassRule::Targets(s)));
        }
    }

    let mut consts = Vec::new();
    for x in [0.0, v / 2.0, v, 2.0 * top, top + EPSILON, top - EPSILON] {
        push_unique(&mut consts, x, f64::NAN);
    }
    for &o in &others {
        push_unique(&mut consts, o + EPSILON, f64::NAN);
        push_unique(&mut consts, o - EPSILON, f64::NAN);
    }
    kinds.extend(consts.into_iter().map(|c| DeviationKind::Compute(ComputeRule::Constant(c))));
    for d in [-top, -top / 2.0, -EPSILON, EPSILON, top / 2.0, top] {
        if d != 0.0 {
            kinds.push(DeviationKind::Compute(ComputeRule::Offset(d)));
        }
    }
    kinds.push(DeviationKind::Compute(ComputeRule::OwnBid));

    kinds
        .into_iter()
        .map(|kind| {
            let mut strategy = Strategy::intended(network, buyer);
            match &kind {
                DeviationKind::Bid(b) => strategy.bid = *b,
                DeviationKind::Neighbors(n) => strategy.invited = n.clone(),
                DeviationKind::Pass(p) => strategy.pass = p.clone(),
                DeviationKind::Compute(c) => strategy.compute = *c,
            }
            Deviation {
                buyer,
                description: describe(network, &kind),
                kind,
                strategy,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_stage1_diffusion;
    use crate::instances::{instance_a, instance_b};

    #[test]
    fn battery_is_large_and_covers_every_family() {
        for n in [instance_a(), instance_b()] {
            let dg = run_stage1_diffusion(&n.truthful());
            for i in n.buyers() {
                let b = deviation_battery(&n, &dg, i);
                assert!(b.len() >= 20, "buyer {} has {}", n.name(i), b.len());
                for fam in ["bid_misreport", "neighbor_subset", "pass_targets", "compute_output"] {
                    assert!(b.iter().any(|d| d.kind.family() == fam));
                }
                assert!(b.iter().all(|d| d.strategy != Strategy::intended(&n, i)));
            }
        }
    }

    #[test]
    fn specific_inviters_are_tried() {
        let n = instance_b();
        let dg = run_stage1_diffusion(&n.truthful());
        let b = deviation_battery(&n, &dg, 2);
        let descs: Vec<&str> = b.iter().map(|d| d.description.as_str()).collect();
        assert!(descs.contains(&"pass=to[a]"));
        assert!(descs.contains(&"pass=to[c]"));
        assert!(descs.contains(&"pass=all-inviters"));
        assert!(descs.contains(&"bid=20"));
    }

    #[test]
    fn subsets() {
        assert_eq!(proper_subsets(&[4, 7]), vec![vec![], vec![4], vec![7]]);
        assert_eq!(proper_subsets(&[1, 2, 3, 4, 5]).len(), 6);
    }
}
