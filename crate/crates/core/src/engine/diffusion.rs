use crate::network::{NodeIx, ReportedProfile, SELLER};

/// Directed invitation structure after top-down diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionGraph {
    depth: Vec<Option<u32>>,
    inviters: Vec<Vec<NodeIx>>,
    invitees: Vec<Vec<NodeIx>>,
}

impl DiffusionGraph {
    /// Assembles a graph from depths and inviter lists; invitee lists are
    /// derived. No consistency checks are made, so aggregation re-validates.
    pub fn from_parts(depth: Vec<Option<u32>>, inviters: Vec<Vec<NodeIx>>) -> Self {
        let mut invitees = vec![Vec::new(); depth.len()];
        for (j, inv) in inviters.iter().enumerate() {
            for &i in inv {
                invitees[i].push(j);
            }
        }
        for list in &mut invitees {
            list.sort_unstable();
        }
        Self {
            depth,
            inviters,
            invitees,
        }
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.len() <= 1
    }

    pub fn depth(&self, node: NodeIx) -> Option<u32> {
        self.depth[node]
    }

    pub fn is_informed(&self, node: NodeIx) -> bool {
        self.depth[node].is_some()
    }

    pub fn inviters(&self, node: NodeIx) -> &[NodeIx] {
        &self.inviters[node]
    }

    pub fn invitees(&self, node: NodeIx) -> &[NodeIx] {
        &self.invitees[node]
    }

    /// Informed buyers (seller excluded).
    pub fn buyers(&self) -> impl Iterator<Item = NodeIx> + '_ {
        (1..self.depth.len()).filter(move |&i| self.depth[i].is_some())
    }
}

/// Synchronous BFS rounds from the seller. A buyer first informed in round
/// t + 1 has as inviters every round-t node whose invited list contains her;
/// links between nodes informed in the same round carry no invitation.
pub fn run_stage1_diffusion(reported: &ReportedProfile) -> DiffusionGraph {
    let n = reported.len();
    let mut depth = vec![None; n];
    let mut inviters = vec![Vec::new(); n];
    depth[SELLER] = Some(0);
    let mut frontier = vec![SELLER];
    let mut round = 0;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &i in &frontier {
            for &j in reported.invited(i) {
                match depth[j] {
                    None => {
                        depth[j] = Some(round + 1);
                        inviters[j].push(i);
                        next.push(j);
                    }
                    Some(d) if d == round + 1 => inviters[j].push(i),
                    Some(_) => {}
                }
            }
        }
        for &j in &next {
            inviters[j].sort_unstable();
        }
        next.sort_unstable();
        frontier = next;
        round += 1;
    }
    DiffusionGraph::from_parts(depth, inviters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::net;

    #[test]
    fn instance_b_diffusion() {
        let n = net(&["a", "c"], &[("a", 1.0, &["b"]), ("b", 10.0, &[]), ("c", 2.0, &["b"])]);
        let dg = run_stage1_diffusion(&n.truthful());
        let (a, b, c) = (1, 2, 3);
        assert_eq!(dg.inviters(b), &[a, c]);
        assert_eq!(dg.depth(b), Some(2));
        assert_eq!(dg.invitees(SELLER), &[a, c]);
        assert_eq!(dg.invitees(b), &[] as &[NodeIx]);
    }

    #[test]
    fn same_round_link_is_not_an_invitation() {
        let n = net(&["a", "c"], &[("a", 1.0, &["c"]), ("c", 2.0, &[])]);
        let dg = run_stage1_diffusion(&n.truthful());
        assert_eq!(dg.inviters(1), &[SELLER]);
        assert_eq!(dg.inviters(2), &[SELLER]);
        assert!(dg.invitees(1).is_empty());
        assert!(dg.invitees(2).is_empty());
    }

    #[test]
    fn isolated_seller() {
        let n = net(&[], &[("a", 1.0, &[])]);
        let dg = run_stage1_diffusion(&n.truthful());
        assert_eq!(dg.buyers().count(), 0);
        assert!(!dg.is_informed(1));
    }

    #[test]
    fn uninvited_listing_creates_no_inviter() {
        // b lists a, but a hides b: b never hears about the sale.
        let n = net(&["a"], &[("a", 1.0, &["b"]), ("b", 5.0, &[])]);
        let mut r = n.truthful();
        r.set_invited(&n, 1, vec![SELLER]).unwrap();
        let dg = run_stage1_diffusion(&r);
        assert!(!dg.is_informed(2));
    }
}
