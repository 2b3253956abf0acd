//! Social network model: true profiles, reported profiles, the valid-buyer
//! subgraph, spanning-tree machinery and diffusion paths.
//!
//! Nodes are addressed by dense indices. The seller is always index 0 and the
//! buyers follow in lexicographic order of their string ids, which fixes every
//! iteration order in the crate.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense node index. `SELLER` is 0.
pub type NodeIx = usize;

/// Index of the original seller in every [`Network`].
pub const SELLER: NodeIx = 0;

/// Default refusal threshold for exhaustive spanning-tree enumeration.
pub const DEFAULT_TREE_CAP: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("node `{node}` lists unknown neighbor `{neighbor}`")]
    UnknownNeighbor { node: String, neighbor: String },
    #[error("node `{0}` lists itself as a neighbor")]
    SelfLoop(String),
    #[error("buyer `{id}` has invalid valuation {value}; valuations must be finite and >= 0")]
    InvalidValuation { id: String, value: f64 },
    #[error("buyer `{id}` reports invalid bid {value}; bids must be finite and >= 0")]
    InvalidBid { id: String, value: f64 },
    #[error("node `{node}` invites `{invited}` which is not one of its neighbors")]
    InviteOutsideNeighbors { node: String, invited: String },
    #[error("profile has {got} entries, network has {expected} nodes")]
    SizeMismatch { expected: usize, got: usize },
    #[error(
        "graph has {count} spanning trees, above the cap of {cap}; use Monte-Carlo tree sampling instead"
    )]
    TooManyTrees { count: u64, cap: u64 },
    #[error("path index {index} out of range for a path of {len} nodes")]
    PathIndex { index: usize, len: usize },
    #[error("path does not start at the seller")]
    PathNotFromSeller,
}

/// One buyer's true type: valuation and social neighbors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerProfile {
    pub id: String,
    pub valuation: f64,
    #[serde(default)]
    pub neighbors: Vec<String>,
}

/// The true social network together with every buyer's private valuation.
///
/// Social ties are undirected: a tie listed by either endpoint belongs to
/// both endpoints' neighbor sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    names: Vec<String>,
    valuations: Vec<f64>,
    neighbors: Vec<Vec<NodeIx>>,
    index: BTreeMap<String, NodeIx>,
}

impl Network {
    /// Builds a network from a seller id, the seller's own neighbor list and
    /// the buyer profiles.
    pub fn new(
        seller: &str,
        seller_neighbors: &[String],
        buyers: &[BuyerProfile],
    ) -> Result<Self, NetworkError> {
        let mut sorted: Vec<&BuyerProfile> = buyers.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));

        let mut names = vec![seller.to_string()];
        let mut valuations = vec![0.0];
        let mut index = BTreeMap::new();
        index.insert(seller.to_string(), SELLER);
        for b in &sorted {
            if !(b.valuation.is_finite() && b.valuation >= 0.0) {
                return Err(NetworkError::InvalidValuation {
                    id: b.id.clone(),
                    value: b.valuation,
                });
            }
            if index.insert(b.id.clone(), names.len()).is_some() {
                return Err(NetworkError::DuplicateId(b.id.clone()));
            }
            names.push(b.id.clone());
            valuations.push(b.valuation);
        }

        let mut sets = vec![BTreeSet::new(); names.len()];
        let lists = std::iter::once((seller, seller_neighbors))
            .chain(sorted.iter().map(|b| (b.id.as_str(), b.neighbors.as_slice())));
        for (owner, list) in lists {
            let i = index[owner];
            for n in list {
                let j = *index
                    .get(n)
                    .ok_or_else(|| NetworkError::UnknownNeighbor {
                        node: owner.to_string(),
                        neighbor: n.clone(),
                    })?;
                if i == j {
                    return Err(NetworkError::SelfLoop(owner.to_string()));
                }
                sets[i].insert(j);
                sets[j].insert(i);
            }
        }
        let neighbors = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        Ok(Self {
            names,
            valuations,
            neighbors,
            index,
        })
    }

    /// Number of nodes including the seller.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.len() <= 1
    }

    /// Buyer indices, in canonical order.
    pub fn buyers(&self) -> std::ops::Range<NodeIx> {
        1..self.names.len()
    }

    pub fn name(&self, node: NodeIx) -> &str {
        &self.names[node]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, id: &str) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    pub fn valuation(&self, node: NodeIx) -> f64 {
        self.valuations[node]
    }

    pub fn valuations(&self) -> &[f64] {
        &self.valuations
    }

    pub fn neighbors(&self, node: NodeIx) -> &[NodeIx] {
        &self.neighbors[node]
    }

    /// Returns a copy with replaced buyer valuations (index 0 is ignored).
    pub fn with_valuations(&self, valuations: &[f64]) -> Result<Self, NetworkError> {
        if valuations.len() != self.len() {
            return Err(NetworkError::SizeMismatch {
                expected: self.len(),
                got: valuations.len(),
            });
        }
        let mut out = self.clone();
        for i in self.buyers() {
            let v = valuations[i];
            if !(v.is_finite() && v >= 0.0) {
                return Err(NetworkError::InvalidValuation {
                    id: self.names[i].clone(),
                    value: v,
                });
            }
            out.valuations[i] = v;
        }
        Ok(out)
    }

    /// Shortest-path depth of every node from the seller over true ties.
    pub fn depths(&self) -> Vec<Option<u32>> {
        bfs_depths(self.len(), SELLER, |i| self.neighbors[i].iter().copied())
    }

    /// Profiles as they appear in a graph file (neighbors listed in full).
    pub fn buyer_profiles(&self) -> Vec<BuyerProfile> {
        self.buyers()
            .map(|i| BuyerProfile {
                id: self.names[i].clone(),
                valuation: self.valuations[i],
                neighbors: self.neighbors[i]
                    .iter()
                    .map(|&j| self.names[j].clone())
                    .collect(),
            })
            .collect()
    }

    /// The truthful report: every buyer bids her valuation and invites all
    /// of her neighbors.
    pub fn truthful(&self) -> ReportedProfile {
        ReportedProfile {
            bids: self.valuations.clone(),
            invited: self.neighbors.clone(),
        }
    }
}

/// Reported types θ': a bid and an invited subset of true neighbors per
/// node. The seller's entry is her bid 0 and her full neighbor set.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportedProfile {
    bids: Vec<f64>,
    invited: Vec<Vec<NodeIx>>,
}

impl ReportedProfile {
    pub fn new(
        network: &Network,
        bids: Vec<f64>,
        invited: Vec<Vec<NodeIx>>,
    ) -> Result<Self, NetworkError> {
        let mut out = network.truthful();
        if bids.len() != network.len() || invited.len() != network.len() {
            return Err(NetworkError::SizeMismatch {
                expected: network.len(),
                got: bids.len().min(invited.len()),
            });
        }
        for i in network.buyers() {
            out.set_bid(network, i, bids[i])?;
            out.set_invited(network, i, invited[i].clone())?;
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.len() <= 1
    }

    pub fn bid(&self, node: NodeIx) -> f64 {
        self.bids[node]
    }

    pub fn bids(&self) -> &[f64] {
        &self.bids
    }

    pub fn invited(&self, node: NodeIx) -> &[NodeIx] {
        &self.invited[node]
    }

    pub fn set_bid(&mut self, network: &Network, node: NodeIx, bid: f64) -> Result<(), NetworkError> {
        if !(bid.is_finite() && bid >= 0.0) {
            return Err(NetworkError::InvalidBid {
                id: network.name(node).to_string(),
                value: bid,
            });
        }
        if node != SELLER {
            self.bids[node] = bid;
        }
        Ok(())
    }

    /// Replaces a node's invited set; it must be a subset of her true
    /// neighbors.
    pub fn set_invited(
        &mut self,
        network: &Network,
        node: NodeIx,
        mut invited: Vec<NodeIx>,
    ) -> Result<(), NetworkError> {
        invited.sort_unstable();
        invited.dedup();
        for &j in &invited {
            if network.neighbors(node).binary_search(&j).is_err() {
                return Err(NetworkError::InviteOutsideNeighbors {
                    node: network.name(node).to_string(),
                    invited: network
                        .names()
                        .get(j)
                        .cloned()
                        .unwrap_or_else(|| format!("#{j}")),
                });
            }
        }
        self.invited[node] = invited;
        Ok(())
    }
}

/// G(θ'): the seller's connected component under one-sided report edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidSubgraph {
    valid: Vec<bool>,
    adj: Vec<Vec<NodeIx>>,
    bids: Vec<f64>,
}

impl ValidSubgraph {
    pub fn node_count(&self) -> usize {
        self.valid.len()
    }

    pub fn contains(&self, node: NodeIx) -> bool {
        self.valid.get(node).copied().unwrap_or(false)
    }

    /// Valid nodes, seller first.
    pub fn nodes(&self) -> impl Iterator<Item = NodeIx> + '_ {
        (0..self.valid.len()).filter(move |&i| self.valid[i])
    }

    /// Valid buyers (seller excluded).
    pub fn buyers(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.nodes().filter(|&i| i != SELLER)
    }

    pub fn buyer_count(&self) -> usize {
        self.buyers().count()
    }

    pub fn neighbors(&self, node: NodeIx) -> &[NodeIx] {
        &self.adj[node]
    }

    pub fn has_edge(&self, a: NodeIx, b: NodeIx) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn bid(&self, node: NodeIx) -> f64 {
        self.bids[node]
    }

    pub fn bids(&self) -> &[f64] {
        &self.bids
    }

    /// Highest reported bid over a node set, 0 for the empty set.
    pub fn top_bid<I: IntoIterator<Item = NodeIx>>(&self, nodes: I) -> f64 {
        nodes.into_iter().map(|i| self.bids[i]).fold(0.0, f64::max)
    }

    /// Valid buyers holding the highest bid.
    pub fn top_bidders(&self) -> Vec<NodeIx> {
        let top = self.top_bid(self.buyers());
        self.buyers().filter(|&i| self.bids[i] == top).collect()
    }
}

/// Builds G(θ'): an edge {i, j} exists when either endpoint lists the other,
/// and only the seller's connected component is kept.
pub fn build_valid_subgraph(reported: &ReportedProfile) -> ValidSubgraph {
    let n = reported.len();
    let mut sets = vec![BTreeSet::new(); n];
    for i in 0..n {
        for &j in reported.invited(i) {
            sets[i].insert(j);
            sets[j].insert(i);
        }
    }
    let depth = bfs_depths(n, SELLER, |i| sets[i].iter().copied());
    let valid: Vec<bool> = depth.iter().map(Option::is_some).collect();
    let adj = sets
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if valid[i] {
                s.into_iter().filter(|&j| valid[j]).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let bids = reported
        .bids()
        .iter()
        .zip(&valid)
        .map(|(&b, &v)| if v { b } else { 0.0 })
        .collect();
    ValidSubgraph { valid, adj, bids }
}

pub(crate) fn bfs_depths<F, I>(n: usize, root: NodeIx, neighbors: F) -> Vec<Option<u32>>
where
    F: Fn(NodeIx) -> I,
    I: Iterator<Item = NodeIx>,
{
    let mut depth = vec![None; n];
    depth[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let d = depth[u].unwrap_or(0);
        for v in neighbors(u) {
            if depth[v].is_none() {
                depth[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    depth
}

/// A spanning tree of the valid subgraph rooted at the seller.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpanningTree {
    parent: Vec<Option<NodeIx>>,
}

impl SpanningTree {
    /// Wraps a parent map. Returns `None` unless every valid buyer has a
    /// parent that is a graph neighbor and all buyers reach the seller.
    pub fn from_parents(g: &ValidSubgraph, parent: Vec<Option<NodeIx>>) -> Option<Self> {
        if parent.len() != g.node_count() || parent[SELLER].is_some() {
            return None;
        }
        for i in 0..parent.len() {
            match parent[i] {
                Some(p) if g.contains(i) && i != SELLER => {
                    if !g.has_edge(i, p) {
                        return None;
                    }
                }
                None if !g.contains(i) || i == SELLER => {}
                _ => return None,
            }
        }
        let tree = Self { parent };
        for i in g.buyers() {
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = tree.parent[cur] {
                cur = p;
                steps += 1;
                if steps > tree.parent.len() {
                    return None;
                }
            }
            if cur != SELLER {
                return None;
            }
        }
        Some(tree)
    }

    pub fn parent(&self, node: NodeIx) -> Option<NodeIx> {
        self.parent[node]
    }

    pub fn parents(&self) -> &[Option<NodeIx>] {
        &self.parent
    }

    pub fn edge_count(&self) -> usize {
        self.parent.iter().flatten().count()
    }

    /// The seller-to-`node` path in the tree.
    pub fn path_to(&self, node: NodeIx) -> Vec<NodeIx> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}

/// Streams every spanning tree of `g` exactly once, or refuses when the
/// matrix-tree count exceeds `cap`.
pub fn enumerate_spanning_trees(g: &ValidSubgraph, cap: u64) -> Result<SpanningTrees<'_>, NetworkError> {
    let count = count_spanning_trees(g);
    if count > cap {
        return Err(NetworkError::TooManyTrees { count, cap });
    }
    Ok(SpanningTrees::new(g))
}

/// Backtracking enumerator over parent assignments. Each rooted spanning tree
/// is exactly one assignment of a neighbor-parent to every buyer without a
/// cycle, so assignments are generated in lexicographic order and cycles are
/// pruned as soon as they close.
pub struct SpanningTrees<'a> {
    g: &'a ValidSubgraph,
    order: Vec<NodeIx>,
    cursor: Vec<usize>,
    parent: Vec<Option<NodeIx>>,
    level: usize,
    done: bool,
}

impl<'a> SpanningTrees<'a> {
    fn new(g: &'a ValidSubgraph) -> Self {
        let order: Vec<NodeIx> = g.buyers().collect();
        Self {
            g,
            cursor: vec![0; order.len()],
            order,
            parent: vec![None; g.node_count()],
            level: 0,
            done: false,
        }
    }

    fn closes_cycle(&self, node: NodeIx, candidate: NodeIx) -> bool {
        let mut cur = candidate;
        loop {
            if cur == node {
                return true;
            }
            match self.parent[cur] {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }
}

impl Iterator for SpanningTrees<'_> {
    type Item = SpanningTree;

    fn next(&mut self) -> Option<SpanningTree> {
        if self.done {
            return None;
        }
        if self.order.is_empty() {
            self.done = true;
            return Some(SpanningTree {
                parent: self.parent.clone(),
            });
        }
        loop {
            if self.level == self.order.len() {
                let tree = SpanningTree {
                    parent: self.parent.clone(),
                };
                self.level -= 1;
                self.parent[self.order[self.level]] = None;
                return Some(tree);
            }
            let node = self.order[self.level];
            let candidates = self.g.neighbors(node);
            let mut placed = false;
            while self.cursor[self.level] < candidates.len() {
                let p = candidates[self.cursor[self.level]];
                self.cursor[self.level] += 1;
                if !self.closes_cycle(node, p) {
                    self.parent[node] = Some(p);
                    placed = true;
                    break;
                }
            }
            if placed {
                self.level += 1;
                if self.level < self.order.len() {
                    self.cursor[self.level] = 0;
                }
            } else {
                if self.level == 0 {
                    self.done = true;
                    return None;
                }
                self.level -= 1;
                self.parent[self.order[self.level]] = None;
            }
        }
    }
}

/// Number of spanning trees by the matrix-tree theorem: the determinant of
/// the Laplacian with the seller's row and column removed.
pub fn count_spanning_trees(g: &ValidSubgraph) -> u64 {
    let nodes: Vec<NodeIx> = g.buyers().collect();
    let pos: BTreeMap<NodeIx, usize> = nodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let m = nodes.len();
    let mut lap = vec![vec![0.0f64; m]; m];
    for (r, &i) in nodes.iter().enumerate() {
        lap[r][r] = g.neighbors(i).len() as f64;
        for j in g.neighbors(i) {
            if let Some(&c) = pos.get(j) {
                lap[r][c] -= 1.0;
            }
        }
    }
    determinant(lap).round().max(0.0) as u64
}

fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap_or(col);
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
            }
        }
    }
    det
}

/// True iff no two path nodes at distance ≥ 2 along the path share an edge.
pub fn is_diffusion_path(path: &[NodeIx], g: &ValidSubgraph) -> bool {
    find_back_edge(path, g).is_none()
}

/// Smallest `i`, then largest `j > i + 1`, with `{path[i], path[j]}` in `g`.
fn find_back_edge(path: &[NodeIx], g: &ValidSubgraph) -> Option<(usize, usize)> {
    for i in 0..path.len() {
        for j in (i + 2..path.len()).rev() {
            if g.has_edge(path[i], path[j]) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Shortcuts back-edges until the path is a diffusion path. At each step the
/// back-edge with the smallest start index is spliced in, jumping to its
/// furthest endpoint.
pub fn transform_to_diffusion_path(path: &[NodeIx], g: &ValidSubgraph) -> Vec<NodeIx> {
    let mut path = path.to_vec();
    while let Some((i, j)) = find_back_edge(&path, g) {
        path.drain(i + 1..j);
    }
    path
}

/// Every diffusion path reachable by splicing back-edges in any order.
/// Used to measure whether the transformation is order independent.
pub fn all_diffusion_transforms(path: &[NodeIx], g: &ValidSubgraph) -> BTreeSet<Vec<NodeIx>> {
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![path.to_vec()];
    while let Some(p) = stack.pop() {
        if !seen.insert(p.clone()) {
            continue;
        }
        let mut any = false;
        for i in 0..p.len() {
            for j in i + 2..p.len() {
                if g.has_edge(p[i], p[j]) {
                    any = true;
                    let mut q = p.clone();
                    q.drain(i + 1..j);
                    stack.push(q);
                }
            }
        }
        if !any {
            out.insert(p);
        }
    }
    out
}

/// Parent map of a spanning tree under resale along `path`: when `path[k]`
/// hosts, every graph neighbor not already on `path[..=k]` is re-parented to
/// her, carrying its subtree.
#[derive(Debug, Clone)]
pub struct ResaleReattachment<'a> {
    g: &'a ValidSubgraph,
    parent: Vec<Option<NodeIx>>,
}

impl<'a> ResaleReattachment<'a> {
    pub fn new(tree: &SpanningTree, g: &'a ValidSubgraph) -> Self {
        Self {
            g,
            parent: tree.parents().to_vec(),
        }
    }

    /// Applies the reattachment performed by `path[k]` as host.
    pub fn host(&mut self, path: &[NodeIx], k: usize) {
        let host = path[k];
        for &n in self.g.neighbors(host) {
            if !path[..=k].contains(&n) {
                self.parent[n] = Some(host);
            }
        }
    }

    pub fn children(&self, node: NodeIx) -> Vec<NodeIx> {
        (0..self.parent.len())
            .filter(|&i| self.parent[i] == Some(node))
            .collect()
    }

    /// `node` and all of its current descendants.
    pub fn subtree(&self, node: NodeIx) -> BTreeSet<NodeIx> {
        let mut out = BTreeSet::from([node]);
        let mut stack = vec![node];
        while let Some(u) = stack.pop() {
            for c in self.children(u) {
                if out.insert(c) {
                    stack.push(c);
                }
            }
        }
        out
    }
}

/// T_{-h_j}: the buyers whose bids compete against `path[j]` before she buys.
///
/// Built by the recursion T_{-h_j} = T_{-h_{j-1}} ∪ {h_{j-1}} ∪ branches of
/// h_{j-1} other than h_j, where branches are taken after h_{j-1} re-parents
/// her neighbors. The seller is never a member.
pub fn excluded_set(
    tree: &SpanningTree,
    g: &ValidSubgraph,
    path: &[NodeIx],
    j: usize,
) -> Result<BTreeSet<NodeIx>, NetworkError> {
    Ok(excluded_sets(tree, g, path)?
        .into_iter()
        .nth(j.checked_sub(1).ok_or(NetworkError::PathIndex {
            index: j,
            len: path.len(),
        })?)
        .ok_or(NetworkError::PathIndex {
            index: j,
            len: path.len(),
        })?)
}

/// All excluded sets T_{-h_1}, …, T_{-h_l} for a path (h_0 = seller).
pub fn excluded_sets(
    tree: &SpanningTree,
    g: &ValidSubgraph,
    path: &[NodeIx],
) -> Result<Vec<BTreeSet<NodeIx>>, NetworkError> {
    if path.first() != Some(&SELLER) {
        return Err(NetworkError::PathNotFromSeller);
    }
    let mut forest = ResaleReattachment::new(tree, g);
    let mut acc = BTreeSet::new();
    let mut out = Vec::with_capacity(path.len().saturating_sub(1));
    for k in 0..path.len() - 1 {
        forest.host(path, k);
        if k > 0 {
            acc.insert(path[k]);
        }
        for c in forest.children(path[k]) {
            if c != path[k + 1] {
                acc.extend(forest.subtree(c));
            }
        }
        out.push(acc.clone());
    }
    Ok(out)
}
