//! Centralized reduction: the sequential resale evaluated on every spanning
//! tree of the valid subgraph (or a sample of them) and averaged.
//!
//! Two tree distributions are supported. `UniformTrees` weighs every
//! spanning tree equally and replays the resale with the neighbor
//! participant rule. `InvitationWeighted` weighs the invitation-consistent
//! trees by the probability that the uniform parent draw of aggregation
//! produces them, and replays them with the invitee rule of the distributed
//! protocol.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    run_sra_on_diffusion, run_stage1_diffusion, run_stage3_allocation, AggregationForest,
    DiffusionGraph, EngineConfig, EngineError, Ledger, ParticipantRule, ResaleTrace, Stage3,
    StrategyProfile,
};
use crate::network::{
    build_valid_subgraph, enumerate_spanning_trees, excluded_sets, transform_to_diffusion_path,
    Network, NetworkError, NodeIx, ReportedProfile, SpanningTree, ValidSubgraph, DEFAULT_TREE_CAP,
    SELLER,
};
use crate::outcome::{OutcomeAccumulator, OutcomeSummary};
use crate::rng::{child_seed, stream};

/// Monte-Carlo tree sample count used when none is given.
pub const DEFAULT_TREE_SAMPLES: u64 = 1_000;

// Trees are evaluated in parallel in chunks of this size, then folded in
// order so that float sums do not depend on scheduling.
const CHUNK: usize = 4_096;

#[derive(Debug, Error, PartialEq)]
pub enum CrmError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeDistribution {
    UniformTrees,
    InvitationWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrmMode {
    /// Every tree; refuses above `cap` trees (or parent assignments).
    Exact { cap: u64 },
    MonteCarlo { samples: u64, seed: u64 },
}

impl Default for CrmMode {
    fn default() -> Self {
        Self::Exact {
            cap: DEFAULT_TREE_CAP,
        }
    }
}

/// Outcome of the resale on one spanning tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeOutcome {
    pub parents: Vec<Option<NodeIx>>,
    /// Diffusion path from the seller to the top bidder.
    pub path: Vec<NodeIx>,
    pub winner: Option<NodeIx>,
    /// Net payment per node; non-winner path nodes receive rewards.
    pub payments: Vec<f64>,
    pub revenue: f64,
}

impl TreeOutcome {
    fn from_trace(tree: &SpanningTree, path: Vec<NodeIx>, t: ResaleTrace) -> Self {
        Self {
            parents: tree.parents().to_vec(),
            path,
            winner: t.winner,
            payments: t.payments,
            revenue: t.revenue,
        }
    }
}

/// Winner and payments on `tree` from the excluded-set formulas alone.
///
/// Along the diffusion path h_1..h_l to `z`, the winner is the first h_j
/// whose bid equals the top bid of T_{-h_{j+1}} (all valid buyers for h_l).
/// She pays the top bid of T_{-w}; every earlier h_j pays
/// top(T_{-h_j}) − top(T_{-h_{j+1}}). Revenue is top(T_{-h_1}).
pub fn closed_form_tree_outcome(tree: &SpanningTree, g: &ValidSubgraph, z: Option<NodeIx>) -> TreeOutcome {
    let n = g.node_count();
    let mut out = TreeOutcome {
        parents: tree.parents().to_vec(),
        path: vec![SELLER],
        winner: None,
        payments: vec![0.0; n],
        revenue: 0.0,
    };
    let Some(z) = z else { return out };
    let path = transform_to_diffusion_path(&tree.path_to(z), g);
    let sets = excluded_sets(tree, g, &path).expect("tree paths start at the seller");
    let l = path.len() - 1;
    let top = |j: usize| {
        if j <= l {
            g.top_bid(sets[j - 1].iter().copied())
        } else {
            g.top_bid(g.buyers())
        }
    };
    let m = (1..=l)
        .find(|&j| g.bid(path[j]) == top(j + 1))
        .unwrap_or(l);
    for j in 1..m {
        out.payments[path[j]] = top(j) - top(j + 1);
    }
    out.payments[path[m]] = top(m);
    out.winner = Some(path[m]);
    out.revenue = top(1);
    out.path = path[..=m].to_vec();
    out
}

/// The resale on `tree` run by the engine: every host re-parents her graph
/// neighbors that have not held the item, and top-bid ties are broken toward
/// `z`'s branch.
pub fn engine_tree_outcome(tree: &SpanningTree, g: &ValidSubgraph, z: Option<NodeIx>) -> TreeOutcome {
    let mut forest = AggregationForest::from_tree(tree, g);
    let stage = Stage3 {
        participants: ParticipantRule::Neighbors(g),
        host_bids: g.bids(),
        reserve_markup: None,
        price_rule: Default::default(),
        prefer_toward: z,
    };
    let t = run_stage3_allocation(&mut forest, &stage, &mut Ledger::new(), 0)
        .expect("replay without markups never fails the ledger check");
    TreeOutcome::from_trace(tree, t.resale_path.clone(), t)
}

/// The resale on an invitation-consistent tree as the distributed protocol
/// runs it: participants are the host's invitees.
fn invitation_tree_trace(
    dg: &DiffusionGraph,
    bids: &[f64],
    parent: &[Option<NodeIx>],
    z: Option<NodeIx>,
) -> Result<ResaleTrace, EngineError> {
    let mut forest = AggregationForest::from_parent_choices(dg, bids, parent)?;
    let stage = Stage3 {
        participants: ParticipantRule::Invitees(dg),
        host_bids: bids,
        reserve_markup: None,
        price_rule: Default::default(),
        prefer_toward: z,
    };
    run_stage3_allocation(&mut forest, &stage, &mut Ledger::new(), 0)
}

fn top_bidders(g: &ValidSubgraph, dg: Option<&DiffusionGraph>) -> Vec<Option<NodeIx>> {
    let z: Vec<Option<NodeIx>> = match dg {
        None => g.top_bidders().into_iter().map(Some).collect(),
        Some(dg) => {
            let top = g.top_bid(dg.buyers());
            dg.buyers().filter(|&i| g.bid(i) == top).map(Some).collect()
        }
    };
    if z.is_empty() {
        vec![None]
    } else {
        z
    }
}

/// Evaluates items in parallel chunks and folds the partial accumulators in
/// item order.
fn ordered_fold<T, I, F>(items: I, nodes: usize, eval: F) -> Result<OutcomeAccumulator, CrmError>
where
    T: Send + Sync,
    I: Iterator<Item = T>,
    F: Fn(&T) -> Result<OutcomeAccumulator, CrmError> + Sync,
{
    let mut acc = OutcomeAccumulator::new(nodes);
    let mut items = items.peekable();
    while items.peek().is_some() {
        let chunk: Vec<T> = items.by_ref().take(CHUNK).collect();
        let parts: Vec<Result<OutcomeAccumulator, CrmError>> = chunk.par_iter().map(&eval).collect();
        for p in parts {
            acc = acc.merge(p?);
        }
    }
    Ok(acc)
}

/// Mixed-radix enumeration of one inviter per informed buyer.
fn parent_assignments(dg: &DiffusionGraph, cap: u64) -> Result<impl Iterator<Item = Vec<Option<NodeIx>>> + '_, NetworkError> {
    let choosers: Vec<NodeIx> = dg.buyers().filter(|&i| !dg.inviters(i).is_empty()).collect();
    let mut total: u64 = 1;
    for &i in &choosers {
        total = total.saturating_mul(dg.inviters(i).len() as u64);
    }
    if total > cap {
        return Err(NetworkError::TooManyTrees { count: total, cap });
    }
    Ok((0..total).map(move |mut code| {
        let mut parent = vec![None; dg.len()];
        for &i in &choosers {
            let inv = dg.inviters(i);
            parent[i] = Some(inv[(code % inv.len() as u64) as usize]);
            code /= inv.len() as u64;
        }
        parent
    }))
}

fn assignment_weight(dg: &DiffusionGraph) -> f64 {
    dg.buyers()
        .map(|i| dg.inviters(i).len())
        .filter(|&k| k > 1)
        .fold(1.0, |w, k| w / k as f64)
}

/// A uniformly random spanning tree rooted at the seller (Wilson's
/// loop-erased random walks).
pub fn sample_uniform_tree(g: &ValidSubgraph, rng: &mut ChaCha8Rng) -> SpanningTree {
    let n = g.node_count();
    let mut in_tree = vec![false; n];
    let mut next: Vec<Option<NodeIx>> = vec![None; n];
    in_tree[SELLER] = true;
    for i in g.buyers() {
        let mut u = i;
        while !in_tree[u] {
            let nb = g.neighbors(u);
            next[u] = Some(nb[rng.gen_range(0..nb.len())]);
            u = next[u].expect("just set");
        }
        let mut u = i;
        while !in_tree[u] {
            in_tree[u] = true;
            u = next[u].expect("walk visited u");
        }
    }
    let parent = (0..n)
        .map(|i| if g.contains(i) && i != SELLER { next[i] } else { None })
        .collect();
    SpanningTree::from_parents(g, parent).expect("Wilson's algorithm yields a spanning tree")
}

fn sample_parents(dg: &DiffusionGraph, rng: &mut ChaCha8Rng) -> Vec<Option<NodeIx>> {
    let mut parent = vec![None; dg.len()];
    for i in dg.buyers() {
        let inv = dg.inviters(i);
        if !inv.is_empty() {
            parent[i] = Some(inv[rng.gen_range(0..inv.len())]);
        }
    }
    parent
}

fn pick<T: Copy>(items: &[T], rng: &mut ChaCha8Rng) -> T {
    if items.len() == 1 {
        items[0]
    } else {
        items[rng.gen_range(0..items.len())]
    }
}

fn add_trace(acc: &mut OutcomeAccumulator, weight: f64, t: &TreeOutcome) {
    acc.add(weight, t.winner, &t.payments, t.revenue);
}

/// Raw CRM accumulator; see [`crm_run`].
pub fn crm_accumulate(
    reported: &ReportedProfile,
    mode: CrmMode,
    distribution: TreeDistribution,
) -> Result<OutcomeAccumulator, CrmError> {
    let g = build_valid_subgraph(reported);
    let n = g.node_count();
    match (distribution, mode) {
        (TreeDistribution::UniformTrees, CrmMode::Exact { cap }) => {
            let zs = top_bidders(&g, None);
            let w = 1.0 / zs.len() as f64;
            ordered_fold(enumerate_spanning_trees(&g, cap)?, n, |tree| {
                let mut acc = OutcomeAccumulator::new(n);
                for &z in &zs {
                    add_trace(&mut acc, w, &engine_tree_outcome(tree, &g, z));
                }
                acc.count_unit();
                Ok(acc)
            })
        }
        (TreeDistribution::UniformTrees, CrmMode::MonteCarlo { samples, seed }) => {
            let zs = top_bidders(&g, None);
            ordered_fold(0..samples, n, |&k| {
                let mut rng = stream(child_seed(seed, k), 0);
                let tree = sample_uniform_tree(&g, &mut rng);
                let z = pick(&zs, &mut rng);
                let mut acc = OutcomeAccumulator::new(n);
                add_trace(&mut acc, 1.0, &engine_tree_outcome(&tree, &g, z));
                acc.count_unit();
                Ok(acc)
            })
        }
        (TreeDistribution::InvitationWeighted, CrmMode::Exact { cap }) => {
            let dg = run_stage1_diffusion(reported);
            let zs = top_bidders(&g, Some(&dg));
            let w = assignment_weight(&dg) / zs.len() as f64;
            let assignments = parent_assignments(&dg, cap)?;
            let acc = ordered_fold(assignments, n, |parent| {
                let mut acc = OutcomeAccumulator::new(n);
                for &z in &zs {
                    let t = invitation_tree_trace(&dg, reported.bids(), parent, z)?;
                    acc.add(w, t.winner, &t.payments, t.revenue);
                }
                acc.count_unit();
                Ok(acc)
            });
            acc
        }
        (TreeDistribution::InvitationWeighted, CrmMode::MonteCarlo { samples, seed }) => {
            let dg = run_stage1_diffusion(reported);
            let zs = top_bidders(&g, Some(&dg));
            ordered_fold(0..samples, n, |&k| {
                let mut rng = stream(child_seed(seed, k), 0);
                let parent = sample_parents(&dg, &mut rng);
                let z = pick(&zs, &mut rng);
                let t = invitation_tree_trace(&dg, reported.bids(), &parent, z)?;
                let mut acc = OutcomeAccumulator::new(n);
                acc.add(1.0, t.winner, &t.payments, t.revenue);
                acc.count_unit();
                Ok(acc)
            })
        }
    }
}

/// Expected allocation and payments of the centralized reduction on the
/// reported profile; utilities use the network's true valuations.
pub fn crm_run(
    network: &Network,
    reported: &ReportedProfile,
    mode: CrmMode,
    distribution: TreeDistribution,
) -> Result<OutcomeSummary, CrmError> {
    Ok(crm_accumulate(reported, mode, distribution)?.finish(network))
}

/// Runs the distributed mechanism on `samples` derived seeds.
pub fn sra_monte_carlo(
    strategies: &StrategyProfile,
    samples: u64,
    seed: u64,
    config: &EngineConfig,
) -> Result<OutcomeAccumulator, EngineError> {
    let dg = run_stage1_diffusion(strategies.reported());
    let n = dg.len();
    let acc = ordered_fold(0..samples, n, |&k| {
        let t = run_sra_on_diffusion(&dg, strategies, child_seed(seed, k), config)?;
        let mut acc = OutcomeAccumulator::new(n);
        acc.add(1.0, t.winner, &t.payments, t.revenue);
        acc.count_unit();
        Ok(acc)
    });
    acc.map_err(|e| match e {
        CrmError::Engine(e) => e,
        CrmError::Network(_) => unreachable!("seed runs raise engine errors only"),
    })
}

/// One per-buyer comparison between simulated SRA and weighted CRM.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub id: String,
    pub metric: &'static str,
    pub sra: f64,
    pub sra_se: f64,
    pub crm: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// Spanning trees compared by closed form and engine replay.
    pub trees: u64,
    pub tree_mismatches: Vec<String>,
    pub sra_samples: u64,
    pub rows: Vec<DistributionRow>,
    /// Largest absolute gap in π or expected payment between the uniform and
    /// invitation-weighted tree distributions.
    pub divergence: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.tree_mismatches.is_empty() && self.rows.iter().all(|r| r.within)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "crm_equivalence trees={} tree_mismatches={} sra_samples={} divergence={} status={}\n",
            self.trees,
            self.tree_mismatches.len(),
            self.sra_samples,
            self.divergence,
            if self.passed() { "PASS" } else { "FAIL" }
        );
        for m in &self.tree_mismatches {
            let _ = writeln!(out, "mismatch {m}");
        }
        out.push_str("id,metric,sra,sra_se,crm,within\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.id, r.metric, r.sra, r.sra_se, r.crm, r.within);
        }
        out
    }
}

/// Closed form against engine replay on every tree, plus simulated SRA
/// against weighted CRM within three standard errors.
pub fn crm_equivalence_check(network: &Network, samples: u64, seed: u64) -> Result<EquivalenceReport, CrmError> {
    let reported = network.truthful();
    let g = build_valid_subgraph(&reported);
    let zs = top_bidders(&g, None);
    let mut trees = 0u64;
    let mut tree_mismatches = Vec::new();
    for tree in enumerate_spanning_trees(&g, DEFAULT_TREE_CAP)? {
        trees += 1;
        for &z in &zs {
            let a = closed_form_tree_outcome(&tree, &g, z);
            let b = engine_tree_outcome(&tree, &g, z);
            if a.winner != b.winner || a.payments != b.payments || a.revenue != b.revenue {
                tree_mismatches.push(format!(
                    "parents={:?} z={:?} closed_form=({:?},{:?}) engine=({:?},{:?})",
                    tree.parents(),
                    z,
                    a.winner,
                    a.payments,
                    b.winner,
                    b.payments
                ));
            }
        }
    }

    let sra = sra_monte_carlo(&StrategyProfile::intended(network), samples, seed, &EngineConfig::default())?;
    let (se_pi, se_p) = sra.standard_errors();
    let sra_sum = sra.finish(network);
    let weighted = crm_run(network, &reported, CrmMode::default(), TreeDistribution::InvitationWeighted)?;
    let uniform = crm_run(network, &reported, CrmMode::default(), TreeDistribution::UniformTrees)?;
    let mut rows = Vec::new();
    let mut divergence = 0.0f64;
    for i in network.buyers() {
        let (s, c, u) = (sra_sum.buyer(i), weighted.buyer(i), uniform.buyer(i));
        for (metric, sv, se, cv) in [
            ("pi", s.win_probability, se_pi[i], c.win_probability),
            ("payment", s.expected_payment, se_p[i], c.expected_payment),
        ] {
            rows.push(DistributionRow {
                id: s.id.clone(),
                metric,
                sra: sv,
                sra_se: se,
                crm: cv,
                within: (sv - cv).abs() <= 3.0 * se + 1e-9,
            });
        }
        divergence = divergence
            .max((u.win_probability - c.win_probability).abs())
            .max((u.expected_payment - c.expected_payment).abs());
    }
    Ok(EquivalenceReport {
        trees,
        tree_mismatches,
        sra_samples: samples,
        rows,
        divergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{instance_a, instance_b};
    use crate::network::tests::net;

    fn b_tree(n: &Network, b_parent: &str) -> (ValidSubgraph, SpanningTree) {
        let g = build_valid_subgraph(&n.truthful());
        let ix = |s| n.index_of(s).unwrap();
        let mut p = vec![None; 4];
        p[ix("a")] = Some(SELLER);
        p[ix("c")] = Some(SELLER);
        p[ix("b")] = Some(ix(b_parent));
        let t = SpanningTree::from_parents(&g, p).unwrap();
        (g, t)
    }

    #[test]
    fn closed_form_instance_b() {
        let n = instance_b();
        let (a, b, c) = (1, 2, 3);

        let (g, t) = b_tree(&n, "a");
        let o = closed_form_tree_outcome(&t, &g, Some(b));
        assert_eq!(o.path, vec![SELLER, a, b]);
        assert_eq!(o.winner, Some(b));
        assert_eq!((o.payments[a], o.payments[b], o.payments[c]), (0.0, 2.0, 0.0));
        assert_eq!(o.revenue, 2.0);

        let (g, t) = b_tree(&n, "c");
        let o = closed_form_tree_outcome(&t, &g, Some(b));
        assert_eq!(o.winner, Some(c));
        assert_eq!(o.payments[c], 1.0);
        assert_eq!(o.revenue, 1.0);
    }

    #[test]
    fn single_buyer_pays_nothing() {
        let n = net(&["a"], &[("a", 5.0, &[])]);
        let s = crm_run(&n, &n.truthful(), CrmMode::default(), TreeDistribution::UniformTrees).unwrap();
        assert_eq!(s.buyer(1).win_probability, 1.0);
        assert_eq!(s.buyer(1).expected_payment, 0.0);
        assert_eq!(s.count, 1);
    }

    #[test]
    fn instance_b_uniform_exact() {
        let n = instance_b();
        let s = crm_run(&n, &n.truthful(), CrmMode::default(), TreeDistribution::UniformTrees).unwrap();
        assert_eq!(s.count, 4);
        let (b, c) = (s.by_id("b").unwrap(), s.by_id("c").unwrap());
        assert_eq!((b.win_probability, c.win_probability), (0.5, 0.5));
        assert_eq!((b.expected_payment, c.expected_payment), (1.0, 0.5));
        assert_eq!(s.revenue, 1.5);
        assert_eq!(c.expected_utility, 0.5);
    }

    #[test]
    fn instance_b_weighted_matches_uniform() {
        let n = instance_b();
        let u = crm_run(&n, &n.truthful(), CrmMode::default(), TreeDistribution::UniformTrees).unwrap();
        let w = crm_run(&n, &n.truthful(), CrmMode::default(), TreeDistribution::InvitationWeighted).unwrap();
        assert_eq!(u.buyers, w.buyers);
        assert_eq!(u.revenue, w.revenue);
        assert_eq!(w.count, 2);
    }

    #[test]
    fn instance_a_single_tree() {
        let n = instance_a();
        let s = crm_run(&n, &n.truthful(), CrmMode::default(), TreeDistribution::UniformTrees).unwrap();
        assert_eq!(s.count, 1);
        let a = s.by_id("a").unwrap();
        assert_eq!((a.win_probability, a.expected_payment), (1.0, 2.0));
    }

    #[test]
    fn monte_carlo_close_to_exact() {
        let n = instance_b();
        for dist in [TreeDistribution::UniformTrees, TreeDistribution::InvitationWeighted] {
            let s = crm_run(&n, &n.truthful(), CrmMode::MonteCarlo { samples: 4000, seed: 9 }, dist).unwrap();
            assert_eq!(s.count, 4000);
            assert!((s.revenue - 1.5).abs() < 0.04, "{dist:?} {}", s.revenue);
            let again = crm_run(&n, &n.truthful(), CrmMode::MonteCarlo { samples: 4000, seed: 9 }, dist).unwrap();
            assert_eq!(s, again);
        }
    }

    #[test]
    fn wilson_is_roughly_uniform_on_a_four_cycle() {
        let n = net(&["a", "b"], &[("a", 1.0, &["c"]), ("b", 2.0, &["c"]), ("c", 3.0, &[])]);
        let g = build_valid_subgraph(&n.truthful());
        let mut counts = std::collections::BTreeMap::new();
        let mut rng = stream(3, 0);
        for _ in 0..8000 {
            *counts.entry(sample_uniform_tree(&g, &mut rng).parents().to_vec()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 4);
        assert!(counts.values().all(|&c| (c as f64 - 2000.0).abs() < 150.0), "{counts:?}");
    }

    #[test]
    fn cap_is_enforced() {
        let n = instance_b();
        let e = crm_run(&n, &n.truthful(), CrmMode::Exact { cap: 3 }, TreeDistribution::UniformTrees).unwrap_err();
        assert_eq!(e, CrmError::Network(NetworkError::TooManyTrees { count: 4, cap: 3 }));
        let e = crm_run(&n, &n.truthful(), CrmMode::Exact { cap: 1 }, TreeDistribution::InvitationWeighted).unwrap_err();
        assert!(matches!(e, CrmError::Network(NetworkError::TooManyTrees { count: 2, .. })));
    }

    #[test]
    fn equivalence_on_instance_b() {
        let r = crm_equivalence_check(&instance_b(), 2000, 1).unwrap();
        assert_eq!(r.trees, 4);
        assert!(r.tree_mismatches.is_empty());
        assert_eq!(r.divergence, 0.0);
        assert!(r.passed(), "{}", r.render());
    }

    #[test]
    fn tree_networks_have_no_divergence() {
        let r = crm_equivalence_check(&instance_a(), 200, 1).unwrap();
        assert_eq!(r.trees, 1);
        assert_eq!(r.divergence, 0.0);
        assert!(r.passed());
    }
}
