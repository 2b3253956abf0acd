use std::collections::BTreeSet;

use rand::Rng;

use super::diffusion::DiffusionGraph;
use super::strategy::{ComputeRule, PassRule, StrategyProfile};
use super::EngineError;
use crate::network::{NodeIx, SpanningTree, ValidSubgraph, SELLER};
use crate::rng::parent_choice_rng;

/// Bottom-up aggregation state: who reports to whom and the resulting
/// aggregated bids. Under intended strategies every member has exactly one
/// parent; deviant message passing yields several parents (a DAG) or none
/// (an orphaned branch).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationForest {
    member: Vec<bool>,
    parents: Vec<Vec<NodeIx>>,
    children: Vec<Vec<NodeIx>>,
    own_bid: Vec<f64>,
    compute: Vec<ComputeRule>,
    bid: Vec<f64>,
}

impl AggregationForest {
    fn assemble(
        member: Vec<bool>,
        parents: Vec<Vec<NodeIx>>,
        own_bid: Vec<f64>,
        compute: Vec<ComputeRule>,
    ) -> Result<Self, EngineError> {
        let n = member.len();
        let mut children = vec![Vec::new(); n];
        for (j, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(j);
            }
        }
        let mut forest = Self {
            member,
            parents,
            children,
            own_bid,
            compute,
            bid: vec![0.0; n],
        };
        forest.recompute()?;
        Ok(forest)
    }

    /// The forest given by a spanning tree, everyone aggregating with max.
    pub fn from_tree(tree: &SpanningTree, g: &ValidSubgraph) -> Self {
        let member = (0..g.node_count()).map(|i| g.contains(i)).collect();
        let parents = tree
            .parents()
            .iter()
            .map(|p| p.iter().copied().collect())
            .collect();
        let compute = vec![ComputeRule::Max; g.node_count()];
        Self::assemble(member, parents, g.bids().to_vec(), compute)
            .expect("a spanning tree is acyclic")
    }

    /// The forest in which every informed buyer reports to `parent[i]`, all
    /// aggregating with max. `parent` must hold one of the buyer's inviters.
    pub fn from_parent_choices(
        dg: &DiffusionGraph,
        own_bids: &[f64],
        parent: &[Option<NodeIx>],
    ) -> Result<Self, EngineError> {
        let n = dg.len();
        let member = (0..n).map(|i| dg.is_informed(i)).collect();
        let parents = parent.iter().map(|p| p.iter().copied().collect()).collect();
        Self::assemble(member, parents, own_bids.to_vec(), vec![ComputeRule::Max; n])
    }

    pub fn len(&self) -> usize {
        self.member.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member.is_empty()
    }

    pub fn is_member(&self, node: NodeIx) -> bool {
        self.member[node]
    }

    pub fn parents(&self, node: NodeIx) -> &[NodeIx] {
        &self.parents[node]
    }

    pub fn children(&self, node: NodeIx) -> &[NodeIx] {
        &self.children[node]
    }

    /// Aggregated bid b_i.
    pub fn bid(&self, node: NodeIx) -> f64 {
        self.bid[node]
    }

    pub fn own_bid(&self, node: NodeIx) -> f64 {
        self.own_bid[node]
    }

    /// `node` and everything that reports into it, directly or not.
    pub fn subtree(&self, node: NodeIx) -> BTreeSet<NodeIx> {
        let mut out = BTreeSet::from([node]);
        let mut stack = vec![node];
        while let Some(u) = stack.pop() {
            for &c in &self.children[u] {
                if out.insert(c) {
                    stack.push(c);
                }
            }
        }
        out
    }

    /// Recomputes every aggregated bid from the leaves up.
    fn recompute(&mut self) -> Result<(), EngineError> {
        let n = self.member.len();
        let mut state = vec![0u8; n];
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            // Iterative post-order: (node, next child index).
            let mut stack = vec![(start, 0usize)];
            state[start] = 1;
            while let Some(&mut (u, ref mut k)) = stack.last_mut() {
                if let Some(&c) = self.children[u].get(*k) {
                    *k += 1;
                    match state[c] {
                        0 => {
                            state[c] = 1;
                            stack.push((c, 0));
                        }
                        1 => return Err(EngineError::InviterCycle(c)),
                        _ => {}
                    }
                } else {
                    stack.pop();
                    state[u] = 2;
                    let received = self.children[u].iter().map(|&c| self.bid[c]);
                    self.bid[u] = if u == SELLER {
                        0.0
                    } else {
                        self.compute[u].apply(received, self.own_bid[u])
                    };
                }
            }
        }
        Ok(())
    }

    /// Host `host` pulls `participants` out of their current parents and
    /// re-parents them to herself; affected bids are re-aggregated.
    pub fn detach_and_reaggregate(&mut self, host: NodeIx, participants: &[NodeIx]) {
        let mut changed = false;
        for &j in participants {
            if self.parents[j] == [host] {
                continue;
            }
            for p in std::mem::take(&mut self.parents[j]) {
                self.children[p].retain(|&c| c != j);
            }
            self.parents[j].push(host);
            self.children[host].push(j);
            changed = true;
        }
        if changed {
            self.recompute()
                .expect("re-parenting a participant to the item holder keeps the forest acyclic");
        }
    }
}

/// Bottom-up aggregation: each informed buyer aggregates what it receives
/// with its compute rule and reports to inviters chosen by its pass rule.
pub fn run_stage2_aggregation(
    dg: &DiffusionGraph,
    strategies: &StrategyProfile,
    seed: u64,
) -> Result<AggregationForest, EngineError> {
    check_acyclic(dg)?;
    let n = dg.len();
    let mut parents = vec![Vec::new(); n];
    for i in dg.buyers() {
        let inviters = dg.inviters(i);
        parents[i] = match strategies.pass(i) {
            PassRule::RandomInviter => {
                if inviters.is_empty() {
                    Vec::new()
                } else {
                    let k = parent_choice_rng(seed, i).gen_range(0..inviters.len());
                    vec![inviters[k]]
                }
            }
            PassRule::Nobody => Vec::new(),
            PassRule::AllInviters => inviters.to_vec(),
            PassRule::Targets(t) => inviters.iter().copied().filter(|p| t.contains(p)).collect(),
        };
    }
    let member = (0..n).map(|i| dg.is_informed(i)).collect();
    let own_bid = strategies.reported().bids().to_vec();
    AggregationForest::assemble(member, parents, own_bid, strategies.compute_rules().to_vec())
}

fn check_acyclic(dg: &DiffusionGraph) -> Result<(), EngineError> {
    let n = dg.len();
    let mut indegree: Vec<usize> = (0..n).map(|i| dg.inviters(i).len()).collect();
    let mut ready: Vec<NodeIx> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(u) = ready.pop() {
        seen += 1;
        for &v in dg.invitees(u) {
            indegree[v] -= 1;
            if indegree[v] == 0 {
                ready.push(v);
            }
        }
    }
    match (0..n).find(|&i| indegree[i] > 0) {
        Some(i) if seen < n => Err(EngineError::InviterCycle(i)),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_stage1_diffusion;
    use crate::engine::strategy::Strategy;
    use crate::network::tests::net;
    use crate::network::{build_valid_subgraph, Network};

    fn instance_b() -> Network {
        net(&["a", "c"], &[("a", 1.0, &["b"]), ("b", 10.0, &[]), ("c", 2.0, &["b"])])
    }

    // Seed for which b's random parent is `want`.
    fn seed_for_parent(n: &Network, want: NodeIx) -> u64 {
        let dg = run_stage1_diffusion(&n.truthful());
        let s = StrategyProfile::intended(n);
        (0..100)
            .find(|&seed| run_stage2_aggregation(&dg, &s, seed).unwrap().parents(2) == [want])
            .unwrap()
    }

    // Max reported bid over the subtree, recomputed by brute force.
    fn subtree_max(f: &AggregationForest, node: NodeIx) -> f64 {
        f.subtree(node).into_iter().map(|i| f.own_bid(i)).fold(0.0, f64::max)
    }

    #[test]
    fn instance_b_aggregation() {
        let n = instance_b();
        let dg = run_stage1_diffusion(&n.truthful());
        let seed = seed_for_parent(&n, 1);
        let f = run_stage2_aggregation(&dg, &StrategyProfile::intended(&n), seed).unwrap();
        assert_eq!(f.bid(1), 10.0);
        assert_eq!(f.bid(3), 2.0);
        assert_eq!(f.bid(2), 10.0);
        for i in 1..4 {
            assert_eq!(f.bid(i), subtree_max(&f, i));
        }
    }

    #[test]
    fn detach_recomputes_former_parent() {
        let n = instance_b();
        let dg = run_stage1_diffusion(&n.truthful());
        let seed = seed_for_parent(&n, 3);
        let mut f = run_stage2_aggregation(&dg, &StrategyProfile::intended(&n), seed).unwrap();
        assert_eq!(f.bid(3), 10.0);
        f.detach_and_reaggregate(1, &[2]);
        assert_eq!(f.bid(3), 2.0);
        assert_eq!(f.bid(1), 10.0);
        assert_eq!(f.parents(2), &[1]);

        let before = f.clone();
        f.detach_and_reaggregate(1, &[2]);
        assert_eq!(f, before);
    }

    #[test]
    fn residual_max_after_detaching_top_child() {
        // E receives from F (12) and G (10); F leaves, E drops to 10.
        let n = net(
            &["b", "e"],
            &[("b", 1.0, &["f"]), ("e", 3.0, &["f", "g"]), ("f", 12.0, &[]), ("g", 10.0, &[])],
        );
        let (b, e, f_, g) = (1, 2, 3, 4);
        let dg = run_stage1_diffusion(&n.truthful());
        let base = StrategyProfile::intended(&n);
        let prof = base
            .with_strategy(
                &n,
                f_,
                Strategy {
                    pass: PassRule::Targets(vec![e]),
                    ..Strategy::intended(&n, f_)
                },
            )
            .unwrap();
        let mut forest = run_stage2_aggregation(&dg, &prof, 0).unwrap();
        assert_eq!(forest.bid(e), 12.0);
        forest.detach_and_reaggregate(b, dg.invitees(b));
        assert_eq!(forest.bid(e), 10.0);
        assert_eq!(forest.parents(g), &[e]);
    }

    #[test]
    fn leaf_bid_is_own_bid() {
        let n = net(&["a"], &[("a", 4.5, &[])]);
        let dg = run_stage1_diffusion(&n.truthful());
        let f = run_stage2_aggregation(&dg, &StrategyProfile::intended(&n), 1).unwrap();
        assert_eq!(f.bid(1), 4.5);
    }

    #[test]
    fn all_inviters_builds_a_dag_and_nobody_orphans() {
        let n = instance_b();
        let dg = run_stage1_diffusion(&n.truthful());
        let dag = StrategyProfile::intended(&n)
            .with_strategy(&n, 2, Strategy { pass: PassRule::AllInviters, ..Strategy::intended(&n, 2) })
            .unwrap();
        let f = run_stage2_aggregation(&dg, &dag, 0).unwrap();
        assert_eq!(f.parents(2), &[1, 3]);
        assert_eq!((f.bid(1), f.bid(3)), (10.0, 10.0));

        let orphan = StrategyProfile::intended(&n)
            .with_strategy(&n, 2, Strategy { pass: PassRule::Nobody, ..Strategy::intended(&n, 2) })
            .unwrap();
        let f = run_stage2_aggregation(&dg, &orphan, 0).unwrap();
        assert!(f.parents(2).is_empty());
        assert_eq!((f.bid(1), f.bid(3)), (1.0, 2.0));
    }

    #[test]
    fn corrupted_inviter_cycle_is_rejected() {
        let dg = DiffusionGraph::from_parts(
            vec![Some(0), Some(1), Some(1)],
            vec![vec![], vec![2], vec![1]],
        );
        let n = net(&["a", "b"], &[("a", 1.0, &["b"]), ("b", 1.0, &[])]);
        let err = run_stage2_aggregation(&dg, &StrategyProfile::intended(&n), 0).unwrap_err();
        assert!(matches!(err, EngineError::InviterCycle(_)));
    }

    #[test]
    fn forest_from_tree() {
        let n = instance_b();
        let g = build_valid_subgraph(&n.truthful());
        let tree = SpanningTree::from_parents(&g, vec![None, Some(0), Some(3), Some(0)]).unwrap();
        let f = AggregationForest::from_tree(&tree, &g);
        assert_eq!(f.bid(3), 10.0);
        assert_eq!(f.bid(1), 1.0);
    }
}
