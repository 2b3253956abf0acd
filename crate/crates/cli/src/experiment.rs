use rayon::prelude::*;
use serde::Serialize;

use sra_core::baselines::{idm_run, vcg_neighbors};
use sra_core::crm::{crm_accumulate, sra_monte_carlo, CrmError, CrmMode};
use sra_core::engine::{EngineConfig, StrategyProfile};
use sra_core::network::{Network, NetworkError};
use sra_core::outcome::OutcomeSummary;
use sra_core::rng::{child_seed, stream};

use crate::config::{distribution, ExperimentConfig, Mechanism};
use crate::CliError;

/// One CSV row. Column order is shared by every mechanism.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuyerRow {
    pub mechanism: &'static str,
    pub id: String,
    pub depth: u32,
    pub win_probability: f64,
    pub avg_utility: f64,
    pub avg_payment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismSummary {
    pub mechanism: &'static str,
    pub revenue: f64,
    /// Auction runs, spanning trees or single evaluations averaged over.
    pub runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub graph: String,
    pub valuation: sra_core::instances::ValuationModel,
    pub samples: u64,
    pub tree_samples: u64,
    pub tree_distribution: &'static str,
    pub seed: u64,
    pub mechanisms: Vec<MechanismSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<BuyerRow>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    pub fn csv(&self) -> String {
        rows_csv(&self.rows)
    }

    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summaries serialize");
        s.push('\n');
        s
    }
}

pub fn rows_csv(rows: &[BuyerRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// Builds per-buyer rows from one summary per mechanism.
pub fn summary_rows(network: &Network, mechanism: Mechanism, s: &OutcomeSummary) -> Vec<BuyerRow> {
    let depths = network.depths();
    network
        .buyers()
        .map(|i| {
            let b = s.buyer(i);
            BuyerRow {
                mechanism: mechanism.name(),
                id: b.id.clone(),
                depth: depths[i].unwrap_or(0),
                win_probability: b.win_probability,
                avg_utility: b.expected_utility,
                avg_payment: b.expected_payment,
            }
        })
        .collect()
}

/// Evaluates one mechanism on one valuation profile.
pub fn evaluate(
    network: &Network,
    mechanism: Mechanism,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<OutcomeSummary, CliError> {
    let reported = network.truthful();
    Ok(match mechanism {
        Mechanism::Sra => sra_monte_carlo(
            &StrategyProfile::intended(network),
            cfg.tree_samples.max(1),
            seed,
            &EngineConfig::default(),
        )?
        .finish(network),
        Mechanism::Crm => {
            // Exact whenever the enumeration fits in the sampling budget.
            let exact = crm_accumulate(&reported, CrmMode::Exact { cap: cfg.tree_samples.max(1) }, cfg.tree_distribution);
            match exact {
                Err(CrmError::Network(NetworkError::TooManyTrees { .. })) => crm_accumulate(
                    &reported,
                    CrmMode::MonteCarlo {
                        samples: cfg.tree_samples,
                        seed,
                    },
                    cfg.tree_distribution,
                )?,
                other => other?,
            }
            .finish(network)
        }
        Mechanism::Idm => idm_run(network, &reported, seed),
        Mechanism::Vcg => vcg_neighbors(network, &reported),
    })
}

/// Samples `cfg.samples` valuation profiles, runs every selected mechanism
/// on each and averages. Instances run in parallel; sums are taken in
/// instance order so the output depends only on the config.
pub fn run_experiment(network: &Network, cfg: &ExperimentConfig) -> Result<ExperimentResult, CliError> {
    crate::config::require_connected(network)?;
    if cfg.samples == 0 {
        return Err(CliError::Invalid("samples must be at least 1".into()));
    }
    let mut mechanisms = cfg.mechanisms.clone();
    mechanisms.sort();
    mechanisms.dedup();
    if mechanisms.is_empty() {
        return Err(CliError::Invalid("no mechanisms selected".into()));
    }

    let per_instance: Vec<Result<Vec<OutcomeSummary>, CliError>> = (0..cfg.samples)
        .into_par_iter()
        .map(|k| {
            let inst_seed = child_seed(cfg.seed, k);
            let inst = cfg.valuation.sample(network, &mut stream(inst_seed, 0));
            mechanisms.iter().map(|&m| evaluate(&inst, m, cfg, inst_seed)).collect()
        })
        .collect();

    let nb = network.len() - 1;
    let mut win = vec![vec![0.0; nb]; mechanisms.len()];
    let mut util = vec![vec![0.0; nb]; mechanisms.len()];
    let mut pay = vec![vec![0.0; nb]; mechanisms.len()];
    let mut revenue = vec![0.0; mechanisms.len()];
    let mut runs = vec![0u64; mechanisms.len()];
    for result in per_instance {
        for (m, s) in result?.into_iter().enumerate() {
            for (j, b) in s.buyers.iter().enumerate() {
                win[m][j] += b.win_probability;
                util[m][j] += b.expected_utility;
                pay[m][j] += b.expected_payment;
            }
            revenue[m] += s.revenue;
            runs[m] += s.count;
        }
    }

    let n = cfg.samples as f64;
    let depths = network.depths();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (m, &mech) in mechanisms.iter().enumerate() {
        for (j, i) in network.buyers().enumerate() {
            rows.push(BuyerRow {
                mechanism: mech.name(),
                id: network.name(i).to_string(),
                depth: depths[i].unwrap_or(0),
                win_probability: win[m][j] / n,
                avg_utility: util[m][j] / n,
                avg_payment: pay[m][j] / n,
            });
        }
        summaries.push(MechanismSummary {
            mechanism: mech.name(),
            revenue: revenue[m] / n,
            runs: runs[m],
        });
    }
    Ok(ExperimentResult {
        rows,
        summary: ExperimentSummary {
            graph: cfg.graph.clone(),
            valuation: cfg.valuation,
            samples: cfg.samples,
            tree_samples: cfg.tree_samples,
            tree_distribution: distribution::name(cfg.tree_distribution),
            seed: cfg.seed,
            mechanisms: summaries,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sra_core::instances::{instance_b, ValuationModel};

    fn row<'a>(r: &'a ExperimentResult, m: &str, id: &str) -> &'a BuyerRow {
        r.rows.iter().find(|x| x.mechanism == m && x.id == id).unwrap()
    }

    #[test]
    fn instance_b_crm_rewards_c_and_idm_does_not() {
        let cfg = ExperimentConfig {
            graph: "instance_b".into(),
            valuation: ValuationModel::Fixed,
            samples: 1,
            mechanisms: vec![Mechanism::Crm, Mechanism::Idm],
            ..ExperimentConfig::default()
        };
        let r = run_experiment(&instance_b(), &cfg).unwrap();
        let c = row(&r, "crm", "c");
        assert_eq!((c.win_probability, c.avg_utility), (0.5, 0.5));
        let c = row(&r, "idm", "c");
        assert_eq!((c.win_probability, c.avg_utility), (0.0, 0.0));
        assert!(r.csv().starts_with("mechanism,id,depth,win_probability,avg_utility,avg_payment\n"));
        assert_eq!(r.summary.mechanisms[0].runs, 4);
    }

    #[test]
    fn single_buyer_wins_at_zero() {
        let n = sra_core::graph_file::parse_network("seller: S\nbuyers:\n  - { id: a, valuation: 0.7, neighbors: [S] }\n").unwrap();
        let cfg = ExperimentConfig {
            valuation: ValuationModel::Fixed,
            samples: 1,
            tree_samples: 10,
            ..ExperimentConfig::default()
        };
        let r = run_experiment(&n, &cfg).unwrap();
        for m in ["sra", "crm", "idm", "vcg"] {
            let a = row(&r, m, "a");
            assert_eq!((a.win_probability, a.avg_utility), (1.0, 0.7), "{m}");
        }
    }

    #[test]
    fn disconnected_graphs_are_rejected() {
        let n = sra_core::graph_file::parse_network(
            "seller: S\nbuyers:\n  - { id: a, valuation: 1, neighbors: [S] }\n  - { id: x, valuation: 1 }\n",
        )
        .unwrap();
        let e = run_experiment(&n, &ExperimentConfig::default()).unwrap_err();
        assert_eq!(e.to_string(), "graph is disconnected from the seller; unreachable buyers: x");
    }
}
