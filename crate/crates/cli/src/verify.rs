use std::fmt::Write as _;

use sra_core::crm::crm_equivalence_check;
use sra_core::engine::{run_sra_with, EngineConfig, StrategyProfile};
use sra_core::harness::{
    ic_check, ir_check, lemma1_fixture_check, random_instances, revenue_check, tree_equivalence_check, IcConfig,
    PropertyReport,
};
use sra_core::instances::{grid13, instance_a, instance_b};
use sra_core::network::Network;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Suite {
    Ir,
    Ic,
    Lemma1,
    Revenue,
    CrmEquivalence,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ir => "ir",
            Self::Ic => "ic",
            Self::Lemma1 => "lemma1",
            Self::Revenue => "revenue",
            Self::CrmEquivalence => "crm_equivalence",
            Self::All => "all",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Run every suite on this network instead of the default battery.
    pub graph: Option<Network>,
    pub instances: Option<usize>,
    /// Seeds per instance (ir, revenue), paired seeds per deviation (ic),
    /// or simulated runs (crm_equivalence, lemma1).
    pub samples: Option<u64>,
    pub seed: u64,
    pub engine: EngineConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub text: String,
}

impl SuiteOutcome {
    /// First violation line of the report, if any.
    pub fn first_violation(&self) -> Option<&str> {
        self.text
            .lines()
            .find(|l| l.starts_with("violation") || l.starts_with("mismatch") || l.contains(",false"))
    }
}

fn battery(opts: &VerifyOptions, default_count: usize, min: usize, max: usize) -> Vec<Network> {
    match &opts.graph {
        Some(g) => vec![g.clone()],
        None => random_instances(opts.instances.unwrap_or(default_count), min, max, opts.seed),
    }
}

fn fixtures(opts: &VerifyOptions) -> Vec<Network> {
    match &opts.graph {
        Some(g) => vec![g.clone()],
        None => vec![instance_a(), instance_b(), grid13()],
    }
}

fn from_report(name: &'static str, r: PropertyReport, mut prefix: String) -> SuiteOutcome {
    prefix.push_str(&r.render());
    SuiteOutcome {
        name,
        passed: r.passed(),
        text: prefix,
    }
}

fn run_one(suite: Suite, opts: &VerifyOptions) -> Result<SuiteOutcome, CliError> {
    Ok(match suite {
        Suite::Ir => {
            let inst = battery(opts, 1_000, 1, 8);
            let mut log = String::new();
            if let Some(g) = &opts.graph {
                let t = run_sra_with(&StrategyProfile::intended(g), opts.seed, &opts.engine)?;
                let u = t.utilities(g);
                let parts: Vec<String> = g.buyers().map(|i| format!("{}={}", g.name(i), u[i])).collect();
                let _ = writeln!(log, "utilities seed={} revenue={} {}", opts.seed, t.revenue, parts.join(" "));
            }
            from_report("ir", ir_check(&inst, opts.samples.unwrap_or(10), opts.seed, &opts.engine), log)
        }
        Suite::Ic => {
            let inst = battery(opts, 100, 1, 6);
            let cfg = IcConfig {
                seeds: opts.samples.unwrap_or(1_000),
                seed: opts.seed,
                engine: opts.engine,
            };
            from_report("ic", ic_check(&inst, &cfg), String::new())
        }
        Suite::Lemma1 => {
            let seeds: Vec<u64> = (0..opts.samples.unwrap_or(100)).collect();
            let r = fixtures(opts)
                .iter()
                .map(|n| lemma1_fixture_check(n, &seeds))
                .fold(PropertyReport::new("lemma1"), PropertyReport::merge);
            from_report("lemma1", r, String::new())
        }
        Suite::Revenue => {
            let mut inst = battery(opts, 1_000, 1, 8);
            if opts.graph.is_none() {
                inst.extend(fixtures(opts));
            }
            from_report("revenue", revenue_check(&inst, opts.samples.unwrap_or(10), opts.seed), String::new())
        }
        Suite::CrmEquivalence => {
            let trees = tree_equivalence_check(&battery(opts, 200, 3, 8));
            let mut passed = trees.passed();
            let mut text = trees.render();
            for n in fixtures(opts) {
                let r = crm_equivalence_check(&n, opts.samples.unwrap_or(10_000), opts.seed)?;
                passed &= r.passed();
                text.push_str(&r.render());
            }
            SuiteOutcome {
                name: "crm_equivalence",
                passed,
                text,
            }
        }
        Suite::All => unreachable!("expanded by run_suites"),
    })
}

pub fn run_suites(suite: Suite, opts: &VerifyOptions) -> Result<Vec<SuiteOutcome>, CliError> {
    let list: Vec<Suite> = match suite {
        Suite::All => vec![Suite::Ir, Suite::Ic, Suite::Lemma1, Suite::Revenue, Suite::CrmEquivalence],
        s => vec![s],
    };
    list.into_iter().map(|s| run_one(s, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ir_on_instance_a_logs_utilities() {
        let opts = VerifyOptions {
            graph: Some(instance_a()),
            samples: Some(5),
            ..VerifyOptions::default()
        };
        let out = run_suites(Suite::Ir, &opts).unwrap();
        assert!(out[0].passed);
        assert!(out[0].text.starts_with("utilities seed=0 revenue=2 a=1 b=0 c=0\n"));
        assert!(out[0].first_violation().is_none());
    }

    #[test]
    fn ic_with_first_price_fails() {
        let opts = VerifyOptions {
            graph: Some(instance_a()),
            samples: Some(20),
            engine: EngineConfig {
                price_rule: sra_core::engine::PriceRule::FirstPrice,
            },
            ..VerifyOptions::default()
        };
        let out = run_suites(Suite::Ic, &opts).unwrap();
        assert!(!out[0].passed);
        assert!(out[0].first_violation().unwrap().starts_with("violation"));
    }
}
