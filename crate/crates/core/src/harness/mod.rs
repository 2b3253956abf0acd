//! Property suites: individual rationality, incentive compatibility under
//! unilateral deviation, bid-independence of payments, revenue dominance over
//! a neighbors-only auction and the tree-by-tree agreement between the
//! centralized closed form and the engine.

mod checks;
mod deviation;

use std::fmt::Write as _;

use serde::Serialize;

pub use checks::{
    ic_check, ir_check, lemma1_check, lemma1_fixture_check, revenue_check, tree_equivalence_check,
    IcConfig,
};
pub use deviation::{deviation_battery, Arm, Deviation, DeviationKind, EPSILON};

use crate::instances::random_network;
use crate::network::Network;
use crate::rng::{child_seed, stream};

/// Absolute tolerance for exact comparisons.
pub const TOLERANCE: f64 = 1e-9;

/// One failed (or statistically unresolved) comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub instance: usize,
    pub buyer: String,
    pub deviation: String,
    pub family: String,
    pub intended: f64,
    pub deviant: f64,
    pub gap: f64,
    /// Standard error of the paired difference; 0 for exact comparisons.
    pub se: f64,
    /// Seed of the worst realization, for exact comparisons.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub instances: usize,
    pub trials: u64,
    pub violations: Vec<Violation>,
    pub inconclusive: Vec<Violation>,
    /// Largest positive gap seen over all trials.
    pub max_gap: f64,
}

impl PropertyReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            instances: 0,
            trials: 0,
            violations: Vec::new(),
            inconclusive: Vec::new(),
            max_gap: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.instances += other.instances;
        self.trials += other.trials;
        self.violations.extend(other.violations);
        self.inconclusive.extend(other.inconclusive);
        self.max_gap = self.max_gap.max(other.max_gap);
        self
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "property={} status={} instances={} trials={} violations={} inconclusive={} max_gap={:e}\n",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.instances,
            self.trials,
            self.violations.len(),
            self.inconclusive.len(),
            self.max_gap + 0.0
        );
        for (tag, rows) in [("violation", &self.violations), ("inconclusive", &self.inconclusive)] {
            for v in rows {
                let _ = writeln!(
                    out,
                    "{tag} instance={} buyer={} family={} deviation={} intended={} deviant={} gap={:e} se={:e} seed={}",
                    v.instance,
                    v.buyer,
                    v.family,
                    v.deviation,
                    v.intended,
                    v.deviant,
                    v.gap,
                    v.se,
                    v.seed.map_or("-".to_string(), |s| s.to_string())
                );
            }
        }
        out
    }
}

/// Random connected instances with `min..=max` buyers, reproducible from
/// `seed`.
pub fn random_instances(count: usize, min_buyers: usize, max_buyers: usize, seed: u64) -> Vec<Network> {
    (0..count)
        .map(|k| {
            let mut rng = stream(child_seed(seed, k as u64), 0);
            let n = min_buyers + (rand::Rng::gen_range(&mut rng, 0..=max_buyers - min_buyers));
            random_network(&mut rng, n, 0.35)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        let a = random_instances(5, 3, 6, 42);
        assert_eq!(a, random_instances(5, 3, 6, 42));
        assert!(a.iter().all(|n| (4..=7).contains(&n.len())));
        assert_ne!(a, random_instances(5, 3, 6, 43));
    }

    #[test]
    fn report_merge_and_render() {
        let mut a = PropertyReport::new("ir");
        a.instances = 2;
        a.trials = 4;
        let mut b = PropertyReport::new("ir");
        b.instances = 1;
        b.max_gap = 0.5;
        b.violations.push(Violation {
            instance: 7,
            buyer: "x".into(),
            deviation: "intended".into(),
            family: "intended".into(),
            intended: 0.0,
            deviant: -0.5,
            gap: 0.5,
            se: 0.0,
            seed: Some(3),
        });
        let m = a.merge(b);
        assert!(!m.passed());
        assert_eq!((m.instances, m.trials), (3, 4));
        assert!(m.render().starts_with("property=ir status=FAIL instances=3"));
        assert!(m.render().contains("violation instance=7 buyer=x"));
    }
}
