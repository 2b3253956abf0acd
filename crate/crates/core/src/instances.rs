//! Named example networks, a random connected-instance generator and the
//! depth-dependent valuation model used by the experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph_file::parse_network;
use crate::network::{BuyerProfile, Network, SELLER};

pub const INSTANCE_A: &str = "\
seller: S
buyers:
  - { id: a, valuation: 3, neighbors: [S, b] }
  - { id: b, valuation: 7, neighbors: [a] }
  - { id: c, valuation: 2, neighbors: [S] }
";

pub const INSTANCE_B: &str = "\
seller: S
buyers:
  - { id: a, valuation: 1, neighbors: [S, b] }
  - { id: b, valuation: 10, neighbors: [a, c] }
  - { id: c, valuation: 2, neighbors: [S, b] }
";

/// Thirteen buyers over four depths with both cut and non-cut buyers.
pub const GRID13: &str = "\
seller: S
buyers:
  - { id: a, valuation: 0.45, neighbors: [S, d] }
  - { id: b, valuation: 0.42, neighbors: [S, d, e] }
  - { id: c, valuation: 0.38, neighbors: [S, e, f] }
  - { id: d, valuation: 0.57, neighbors: [a, b, g] }
  - { id: e, valuation: 0.53, neighbors: [b, c, g, h] }
  - { id: f, valuation: 0.49, neighbors: [c, i] }
  - { id: g, valuation: 0.66, neighbors: [d, e, j] }
  - { id: h, valuation: 0.61, neighbors: [e, j, k] }
  - { id: i, valuation: 0.68, neighbors: [f, l, m] }
  - { id: j, valuation: 0.79, neighbors: [g, h] }
  - { id: k, valuation: 0.74, neighbors: [h] }
  - { id: l, valuation: 0.71, neighbors: [i, m] }
  - { id: m, valuation: 0.83, neighbors: [i, l] }
";

/// Looks up a built-in network by name.
pub fn builtin(name: &str) -> Option<Network> {
    let text = match name {
        "instance_a" => INSTANCE_A,
        "instance_b" => INSTANCE_B,
        "grid13" => GRID13,
        _ => return None,
    };
    Some(parse_network(text).expect("built-in graphs are well formed"))
}

pub fn instance_a() -> Network {
    builtin("instance_a").expect("known name")
}

pub fn instance_b() -> Network {
    builtin("instance_b").expect("known name")
}

pub fn grid13() -> Network {
    builtin("grid13").expect("known name")
}

/// A random connected network: a random recursive tree over the seller and
/// `buyers` buyers, plus every other pair linked with `extra_edge_prob`.
/// Valuations are uniform on [0, 1).
pub fn random_network<R: Rng>(rng: &mut R, buyers: usize, extra_edge_prob: f64) -> Network {
    let ids: Vec<String> = (1..=buyers).map(|i| format!("n{i:02}")).collect();
    let name = |k: usize| if k == 0 { "S".to_string() } else { ids[k - 1].clone() };
    let mut nbrs: Vec<Vec<String>> = vec![Vec::new(); buyers + 1];
    for k in 1..=buyers {
        let parent = rng.gen_range(0..k);
        nbrs[k].push(name(parent));
        for other in 0..k {
            if other != parent && rng.gen_bool(extra_edge_prob) {
                nbrs[k].push(name(other));
            }
        }
    }
    let profiles: Vec<BuyerProfile> = (1..=buyers)
        .map(|k| BuyerProfile {
            id: name(k),
            valuation: rng.gen::<f64>(),
            neighbors: nbrs[k].clone(),
        })
        .collect();
    Network::new("S", &[], &profiles).expect("generated networks are well formed")
}

/// How buyer valuations are drawn for an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValuationModel {
    /// Keep the valuations stored in the graph.
    Fixed,
    /// U[lo_base + lo_step·d, hi_base + hi_step·d] with d the buyer's
    /// shortest-path depth from the seller.
    /// Omitted bounds take the defaults of `depth_uniform_default`.
    DepthUniform {
        #[serde(default = "tenth")]
        lo_base: f64,
        #[serde(default = "tenth")]
        lo_step: f64,
        #[serde(default = "six_tenths")]
        hi_base: f64,
        #[serde(default = "tenth")]
        hi_step: f64,
    },
}

fn tenth() -> f64 {
    0.1
}

fn six_tenths() -> f64 {
    0.6
}

impl ValuationModel {
    /// U[0.1 + 0.1·d, 0.6 + 0.1·d].
    pub const fn depth_uniform_default() -> Self {
        Self::DepthUniform {
            lo_base: 0.1,
            lo_step: 0.1,
            hi_base: 0.6,
            hi_step: 0.1,
        }
    }

    /// Range a buyer at depth `d` is drawn from, if random.
    pub fn range(&self, depth: u32) -> Option<(f64, f64)> {
        match *self {
            Self::Fixed => None,
            Self::DepthUniform {
                lo_base,
                lo_step,
                hi_base,
                hi_step,
            } => Some((lo_base + lo_step * depth as f64, hi_base + hi_step * depth as f64)),
        }
    }

    /// Draws a valuation profile. Buyers unreachable from the seller keep
    /// their stored valuation.
    pub fn sample<R: Rng>(&self, network: &Network, rng: &mut R) -> Network {
        let depths = network.depths();
        let mut vals = network.valuations().to_vec();
        for i in network.buyers() {
            if let Some((lo, hi)) = depths[i].and_then(|d| self.range(d)) {
                vals[i] = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            }
        }
        vals[SELLER] = 0.0;
        network.with_valuations(&vals).expect("sampled valuations are valid")
    }
}
