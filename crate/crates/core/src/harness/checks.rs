use rayon::prelude::*;

use super::deviation::{deviation_battery, Arm, Deviation, EPSILON};
use super::{PropertyReport, Violation, TOLERANCE};
use crate::baselines::vcg_neighbors;
use crate::crm::{
    closed_form_tree_outcome, crm_run, engine_tree_outcome, CrmError, CrmMode, TreeDistribution,
    DEFAULT_TREE_SAMPLES,
};
use crate::engine::{run_sra_on_diffusion, run_stage1_diffusion, EngineConfig, ResaleTrace, Strategy, StrategyProfile};
use crate::network::{
    build_valid_subgraph, enumerate_spanning_trees, Network, NetworkError, NodeIx, DEFAULT_TREE_CAP, SELLER,
};
use crate::rng::child_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcConfig {
    /// Paired seeds per deviation.
    pub seeds: u64,
    pub seed: u64,
    pub engine: EngineConfig,
}

impl Default for IcConfig {
    fn default() -> Self {
        Self {
            seeds: 1_000,
            seed: 0,
            engine: EngineConfig::default(),
        }
    }
}

fn instance_seeds(master: u64, instance: usize, count: u64) -> Vec<u64> {
    let base = child_seed(master, instance as u64);
    (0..count).map(|k| child_seed(base, k)).collect()
}

fn run(profile: &StrategyProfile, seeds: &[u64], engine: &EngineConfig) -> Vec<ResaleTrace> {
    let dg = run_stage1_diffusion(profile.reported());
    seeds
        .iter()
        .map(|&s| run_sra_on_diffusion(&dg, profile, s, engine).expect("deviations without reserve markups run to completion"))
        .collect()
}

fn merge_all(parts: Vec<PropertyReport>, name: &str) -> PropertyReport {
    parts.into_iter().fold(PropertyReport::new(name), PropertyReport::merge)
}

fn compare(
    instance: usize,
    network: &Network,
    dev: &Deviation,
    seeds: &[u64],
    intended: &[f64],
    deviant: &[f64],
    report: &mut PropertyReport,
) {
    let name = network.name(dev.buyer).to_string();
    let row = |intended: f64, deviant: f64, gap: f64, se: f64, seed: Option<u64>| Violation {
        instance,
        buyer: name.clone(),
        deviation: dev.description.clone(),
        family: dev.kind.family().to_string(),
        intended,
        deviant,
        gap,
        se,
        seed,
    };
    report.trials += seeds.len() as u64;
    match dev.kind.arm() {
        Arm::Exact => {
            let (k, gap) = deviant
                .iter()
                .zip(intended)
                .map(|(d, i)| d - i)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, g)| if g > best.1 { (k, g) } else { best });
            report.max_gap = report.max_gap.max(gap);
            if gap > TOLERANCE {
                report.violations.push(row(intended[k], deviant[k], gap, 0.0, Some(seeds[k])));
            }
        }
        Arm::MonteCarlo => {
            let n = seeds.len() as f64;
            let diffs: Vec<f64> = deviant.iter().zip(intended).map(|(d, i)| d - i).collect();
            let mean = diffs.iter().sum::<f64>() / n;
            let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let se = (var / n).sqrt();
            let mi = intended.iter().sum::<f64>() / n;
            let md = deviant.iter().sum::<f64>() / n;
            report.max_gap = report.max_gap.max(mean);
            if mean > TOLERANCE + 3.0 * se {
                report.violations.push(row(mi, md, mean, se, None));
            } else if mean > TOLERANCE {
                report.inconclusive.push(row(mi, md, mean, se, None));
            }
        }
    }
}

/// Every buyer of every instance tries every deviation of the battery while
/// everyone else plays the intended strategy. Seed-by-seed comparison where
/// the tree is unaffected, paired means with a three standard error band
/// otherwise.
pub fn ic_check(instances: &[Network], config: &IcConfig) -> PropertyReport {
    let parts: Vec<PropertyReport> = instances
        .par_iter()
        .enumerate()
        .map(|(idx, network)| {
            let mut report = PropertyReport::new("ic");
            report.instances = 1;
            let seeds = instance_seeds(config.seed, idx, config.seeds);
            let intended = StrategyProfile::intended(network);
            let dg = run_stage1_diffusion(intended.reported());
            let base = run(&intended, &seeds, &config.engine);
            for i in network.buyers() {
                let v = network.valuation(i);
                let base_u: Vec<f64> = base.iter().map(|t| t.utility(i, v)).collect();
                for dev in deviation_battery(network, &dg, i) {
                    let profile = intended
                        .clone()
                        .with_strategy(network, i, dev.strategy.clone())
                        .expect("battery deviations are valid strategies");
                    let dev_u: Vec<f64> = run(&profile, &seeds, &config.engine)
                        .iter()
                        .map(|t| t.utility(i, v))
                        .collect();
                    compare(idx, network, &dev, &seeds, &base_u, &dev_u, &mut report);
                }
            }
            report
        })
        .collect();
    merge_all(parts, "ic")
}

/// Intended play on every instance and seed: no buyer ends with negative
/// utility and the seller's revenue is nonnegative.
pub fn ir_check(instances: &[Network], seeds_per_instance: u64, seed: u64, engine: &EngineConfig) -> PropertyReport {
    let parts: Vec<PropertyReport> = instances
        .par_iter()
        .enumerate()
        .map(|(idx, network)| {
            let mut report = PropertyReport::new("ir");
            report.instances = 1;
            let seeds = instance_seeds(seed, idx, seeds_per_instance);
            for (t, &s) in run(&StrategyProfile::intended(network), &seeds, engine).iter().zip(&seeds) {
                report.trials += 1;
                for (i, &u) in t.utilities(network).iter().enumerate() {
                    report.max_gap = report.max_gap.max(-u);
                    if u < 0.0 {
                        report.violations.push(Violation {
                            instance: idx,
                            buyer: network.name(i).to_string(),
                            deviation: "intended".into(),
                            family: if i == SELLER { "revenue" } else { "utility" }.into(),
                            intended: 0.0,
                            deviant: u,
                            gap: -u,
                            se: 0.0,
                            seed: Some(s),
                        });
                    }
                }
            }
            report
        })
        .collect();
    merge_all(parts, "ir")
}

/// With the seed fixed, any bid of `buyer` that keeps the winner and the
/// resale path leaves her payment bit-identical.
pub fn lemma1_check(network: &Network, buyer: NodeIx, bids: &[f64], seeds: &[u64]) -> PropertyReport {
    let engine = EngineConfig::default();
    let intended = StrategyProfile::intended(network);
    let base = run(&intended, seeds, &engine);
    let mut report = PropertyReport::new("lemma1");
    report.instances = 1;
    for &bid in bids {
        let strategy = Strategy { bid, ..Strategy::intended(network, buyer) };
        let profile = intended
            .clone()
            .with_strategy(network, buyer, strategy)
            .expect("grid bids are valid");
        for ((b, d), &s) in base.iter().zip(run(&profile, seeds, &engine)).zip(seeds) {
            if b.winner != d.winner || b.resale_path != d.resale_path {
                continue;
            }
            report.trials += 1;
            let (pb, pd) = (b.payments[buyer], d.payments[buyer]);
            if pb != pd {
                let gap = (pd - pb).abs();
                report.max_gap = report.max_gap.max(gap);
                report.violations.push(Violation {
                    instance: 0,
                    buyer: network.name(buyer).to_string(),
                    deviation: format!("bid={bid}"),
                    family: "bid_misreport".into(),
                    intended: pb,
                    deviant: pd,
                    gap,
                    se: 0.0,
                    seed: Some(s),
                });
            }
        }
    }
    report
}

/// [`lemma1_check`] for every buyer with a grid spanning zero, fractions and
/// multiples of the valuation and both sides of every other bid.
pub fn lemma1_fixture_check(network: &Network, seeds: &[u64]) -> PropertyReport {
    let top = network.buyers().map(|j| network.valuation(j)).fold(0.0, f64::max);
    let parts: Vec<PropertyReport> = network
        .buyers()
        .map(|i| {
            let v = network.valuation(i);
            let mut grid = vec![0.0, v / 4.0, v / 2.0, 2.0 * v, 10.0 * v, 100.0 * top + 1.0];
            for j in network.buyers().filter(|&j| j != i) {
                grid.push(network.valuation(j) + EPSILON);
                grid.push((network.valuation(j) - EPSILON).max(0.0));
            }
            lemma1_check(network, i, &grid, seeds)
        })
        .collect();
    let mut r = merge_all(parts, "lemma1");
    r.instances = 1;
    r
}

fn crm_revenue(network: &Network) -> Result<f64, CrmError> {
    let reported = network.truthful();
    match crm_run(network, &reported, CrmMode::default(), TreeDistribution::UniformTrees) {
        Err(CrmError::Network(NetworkError::TooManyTrees { .. })) => Ok(crm_run(
            network,
            &reported,
            CrmMode::MonteCarlo {
                samples: DEFAULT_TREE_SAMPLES,
                seed: 0,
            },
            TreeDistribution::UniformTrees,
        )?
        .revenue),
        other => Ok(other?.revenue),
    }
}

/// Every realized revenue, and the expected revenue of the centralized
/// reduction, is at least the revenue of a second-price auction among the
/// seller's neighbors.
pub fn revenue_check(instances: &[Network], seeds_per_instance: u64, seed: u64) -> PropertyReport {
    let engine = EngineConfig::default();
    let parts: Vec<PropertyReport> = instances
        .par_iter()
        .enumerate()
        .map(|(idx, network)| {
            let mut report = PropertyReport::new("revenue");
            report.instances = 1;
            let floor = vcg_neighbors(network, &network.truthful()).revenue;
            let seller = network.name(SELLER).to_string();
            let mut check = |arm: &str, revenue: f64, seed: Option<u64>, tol: f64| {
                report.trials += 1;
                let gap = floor - revenue;
                report.max_gap = report.max_gap.max(gap);
                if gap > tol {
                    report.violations.push(Violation {
                        instance: idx,
                        buyer: seller.clone(),
                        deviation: arm.into(),
                        family: "revenue".into(),
                        intended: floor,
                        deviant: revenue,
                        gap,
                        se: 0.0,
                        seed,
                    });
                }
            };
            let seeds = instance_seeds(seed, idx, seeds_per_instance);
            for (t, &s) in run(&StrategyProfile::intended(network), &seeds, &engine).iter().zip(&seeds) {
                check("sra_realization", t.revenue, Some(s), 0.0);
            }
            let crm = crm_revenue(network).expect("intended reports evaluate");
            check("crm_expected", crm, None, TOLERANCE);
            report
        })
        .collect();
    merge_all(parts, "revenue")
}

/// Closed form against engine replay on every spanning tree of every
/// instance, exact equality of winner, payments and revenue.
pub fn tree_equivalence_check(instances: &[Network]) -> PropertyReport {
    let parts: Vec<PropertyReport> = instances
        .par_iter()
        .enumerate()
        .map(|(idx, network)| {
            let mut report = PropertyReport::new("crm_tree_equivalence");
            report.instances = 1;
            let g = build_valid_subgraph(&network.truthful());
            let zs: Vec<Option<NodeIx>> = match g.top_bidders() {
                z if z.is_empty() => vec![None],
                z => z.into_iter().map(Some).collect(),
            };
            let trees = enumerate_spanning_trees(&g, DEFAULT_TREE_CAP).expect("small instances stay under the cap");
            for tree in trees {
                for &z in &zs {
                    report.trials += 1;
                    let a = closed_form_tree_outcome(&tree, &g, z);
                    let b = engine_tree_outcome(&tree, &g, z);
                    if a.winner != b.winner || a.payments != b.payments || a.revenue != b.revenue {
                        let gap = a
                            .payments
                            .iter()
                            .zip(&b.payments)
                            .map(|(x, y)| (x - y).abs())
                            .fold((a.revenue - b.revenue).abs(), f64::max);
                        report.max_gap = report.max_gap.max(gap);
                        report.violations.push(Violation {
                            instance: idx,
                            buyer: a.winner.map_or("-".into(), |w| network.name(w).to_string()),
                            deviation: format!("tree={:?}", tree.parents()),
                            family: "tree".into(),
                            intended: a.revenue,
                            deviant: b.revenue,
                            gap: if gap > 0.0 { gap } else { f64::INFINITY },
                            se: 0.0,
                            seed: None,
                        });
                    }
                }
            }
            report
        })
        .collect();
    merge_all(parts, "crm_tree_equivalence")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::PriceRule;
    use crate::harness::random_instances;
    use crate::instances::{instance_a, instance_b};
    use crate::network::tests::net;

    #[test]
    fn ir_on_fixtures() {
        let r = ir_check(&[instance_a(), instance_b()], 50, 0, &EngineConfig::default());
        assert!(r.passed(), "{}", r.render());
        assert_eq!(r.trials, 100);
        let zeros = net(&["a", "b"], &[("a", 0.0, &["b"]), ("b", 0.0, &[])]);
        assert!(ir_check(&[zeros], 10, 0, &EngineConfig::default()).passed());
    }

    #[test]
    fn lemma1_instance_b() {
        let n = instance_b();
        let seeds: Vec<u64> = (0..40).collect();
        let r = lemma1_check(&n, 2, &[2.5, 5.0, 10.0, 100.0], &seeds);
        assert!(r.passed(), "{}", r.render());
        assert!(r.trials >= 80);
        let r = lemma1_check(&n, 3, &[0.0, 0.5, 1.0, 1.5, 1.9], &seeds);
        assert!(r.passed());
        assert!(lemma1_fixture_check(&n, &seeds).passed());
        assert!(lemma1_fixture_check(&instance_a(), &seeds).passed());
    }

    #[test]
    fn revenue_on_fixtures() {
        let r = revenue_check(&[instance_a(), instance_b(), net(&[], &[("a", 1.0, &[])])], 20, 0);
        assert!(r.passed(), "{}", r.render());
    }

    #[test]
    fn tree_equivalence_small_random() {
        let r = tree_equivalence_check(&random_instances(15, 3, 6, 7));
        assert!(r.passed(), "{}", r.render());
    }

    #[test]
    fn ic_instance_a_passes() {
        let r = ic_check(&[instance_a()], &IcConfig { seeds: 200, ..IcConfig::default() });
        assert!(r.passed(), "{}", r.render());
    }

    #[test]
    fn ic_finds_the_specific_inviter_deviation() {
        let r = ic_check(&[instance_b()], &IcConfig { seeds: 1000, ..IcConfig::default() });
        let v: Vec<&Violation> = r.violations.iter().collect();
        assert!(
            v.iter().any(|v| v.buyer == "b" && v.deviation == "pass=to[a]" && (v.gap - 4.0).abs() < 0.5),
            "{}",
            r.render()
        );
        assert!(v.iter().all(|v| v.family == "pass_targets"), "{}", r.render());
    }

    #[test]
    fn ic_negative_control_first_price() {
        let engine = EngineConfig { price_rule: PriceRule::FirstPrice };
        let r = ic_check(&[instance_a()], &IcConfig { seeds: 50, seed: 0, engine });
        assert!(!r.passed());
        assert!(r.violations.iter().any(|v| v.family == "bid_misreport"));
    }
}
