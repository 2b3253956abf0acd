use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sra_cli::config::{distribution, load_config, load_graph, ExperimentConfig, Mechanism};
use sra_cli::experiment::{rows_csv, run_experiment, summary_rows};
use sra_cli::verify::{run_suites, Suite, VerifyOptions};
use sra_cli::CliError;
use sra_core::baselines::{idm_run, vcg_neighbors};
use sra_core::crm::{crm_run, CrmMode};
use sra_core::engine::{run_sra_with, EngineConfig, PriceRule, StrategyProfile};
use sra_core::instances::ValuationModel;
use sra_core::network::Network;
use sra_core::outcome::{OutcomeAccumulator, OutcomeSummary};

#[derive(Parser)]
#[command(name = "sra", version, about = "Sequential resale auctions on social networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Graph file, or one of the built-in graphs: instance_a, instance_b, grid13.
    #[arg(long)]
    graph: Option<String>,
    /// YAML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV/JSON (or report) files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriceArg {
    SecondPrice,
    FirstPrice,
}

#[derive(Clone, Copy, ValueEnum)]
enum ValuationArg {
    Fixed,
    DepthUniform,
}

#[derive(Subcommand)]
enum Command {
    /// Run the distributed mechanism (one trace, or an average over seeds).
    RunSra {
        #[command(flatten)]
        common: Common,
        /// Number of seeds to average over; 1 prints the full trace.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, value_enum, hide = true)]
        price_rule: Option<PriceArg>,
    },
    /// Evaluate the centralized reduction over spanning trees.
    RunCrm {
        #[command(flatten)]
        common: Common,
        /// Sample this many trees instead of enumerating all of them.
        #[arg(long)]
        tree_samples: Option<u64>,
        #[arg(long, value_parser = distribution::parse)]
        tree_distribution: Option<sra_core::crm::TreeDistribution>,
    },
    /// Run the information diffusion mechanism.
    RunIdm {
        #[command(flatten)]
        common: Common,
    },
    /// Run a second-price auction among the seller's neighbors.
    RunVcg {
        #[command(flatten)]
        common: Common,
    },
    /// Sample valuation profiles and compare mechanisms.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Number of valuation profiles.
        #[arg(long)]
        samples: Option<u64>,
        /// SRA seeds and CRM trees per profile.
        #[arg(long)]
        tree_samples: Option<u64>,
        #[arg(long, value_parser = distribution::parse)]
        tree_distribution: Option<sra_core::crm::TreeDistribution>,
        #[arg(long, value_enum)]
        valuation: Option<ValuationArg>,
        #[arg(long, value_enum, value_delimiter = ',')]
        mechanisms: Option<Vec<Mechanism>>,
    },
    /// Run property suites; exits 1 when any property fails.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<u64>,
        /// Number of random instances in the default battery.
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, value_enum, hide = true)]
        price_rule: Option<PriceArg>,
    },
}

enum Status {
    Ok,
    PropertyFailed,
}

fn engine(p: Option<PriceArg>) -> EngineConfig {
    EngineConfig {
        price_rule: match p {
            Some(PriceArg::FirstPrice) => PriceRule::FirstPrice,
            _ => PriceRule::SecondPriceWithReserve,
        },
    }
}

fn base_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(g) = &common.graph {
        cfg.graph = g.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn graph_for_run(common: &Common) -> Result<(ExperimentConfig, Network), CliError> {
    if common.graph.is_none() && common.config.is_none() {
        return Err(CliError::Invalid("--graph (or --config with a graph) is required".into()));
    }
    let cfg = base_config(common)?;
    let g = load_graph(&cfg.graph)?;
    Ok((cfg, g))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))
}

#[derive(Serialize)]
struct RunSummary<'a> {
    mechanism: &'a str,
    graph: &'a str,
    seed: u64,
    revenue: f64,
    runs: u64,
}

fn emit(
    common: &Common,
    cfg: &ExperimentConfig,
    network: &Network,
    mechanism: Mechanism,
    s: &OutcomeSummary,
    text: String,
) -> Result<Status, CliError> {
    match &common.out {
        Some(dir) => {
            write_file(dir, "per_buyer.csv", &rows_csv(&summary_rows(network, mechanism, s)))?;
            let summary = RunSummary {
                mechanism: mechanism.name(),
                graph: &cfg.graph,
                seed: cfg.seed,
                revenue: s.revenue,
                runs: s.count,
            };
            let mut json = serde_json::to_string_pretty(&summary).expect("summaries serialize");
            json.push('\n');
            write_file(dir, "summary.json", &json)?;
        }
        None => print!("{text}"),
    }
    Ok(Status::Ok)
}

fn run(cli: Cli) -> Result<Status, CliError> {
    match cli.command {
        Command::RunSra { common, samples, price_rule } => {
            let (cfg, g) = graph_for_run(&common)?;
            let eng = engine(price_rule);
            let strategies = StrategyProfile::intended(&g);
            let samples = samples.unwrap_or(1);
            if samples <= 1 {
                let t = run_sra_with(&strategies, cfg.seed, &eng)?;
                let mut acc = OutcomeAccumulator::new(g.len());
                acc.add(1.0, t.winner, &t.payments, t.revenue);
                acc.count_unit();
                emit(&common, &cfg, &g, Mechanism::Sra, &acc.finish(&g), t.render(&g))
            } else {
                let s = sra_core::crm::sra_monte_carlo(&strategies, samples, cfg.seed, &eng)?.finish(&g);
                emit(&common, &cfg, &g, Mechanism::Sra, &s, s.render())
            }
        }
        Command::RunCrm { common, tree_samples, tree_distribution } => {
            let (cfg, g) = graph_for_run(&common)?;
            let mode = match tree_samples {
                Some(n) => CrmMode::MonteCarlo { samples: n, seed: cfg.seed },
                None => CrmMode::default(),
            };
            let dist = tree_distribution.unwrap_or(cfg.tree_distribution);
            let s = crm_run(&g, &g.truthful(), mode, dist)?;
            emit(&common, &cfg, &g, Mechanism::Crm, &s, s.render())
        }
        Command::RunIdm { common } => {
            let (cfg, g) = graph_for_run(&common)?;
            let s = idm_run(&g, &g.truthful(), cfg.seed);
            emit(&common, &cfg, &g, Mechanism::Idm, &s, s.render())
        }
        Command::RunVcg { common } => {
            let (cfg, g) = graph_for_run(&common)?;
            let s = vcg_neighbors(&g, &g.truthful());
            emit(&common, &cfg, &g, Mechanism::Vcg, &s, s.render())
        }
        Command::Experiment {
            common,
            samples,
            tree_samples,
            tree_distribution,
            valuation,
            mechanisms,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(s) = samples {
                cfg.samples = s;
            }
            if let Some(t) = tree_samples {
                cfg.tree_samples = t;
            }
            if let Some(d) = tree_distribution {
                cfg.tree_distribution = d;
            }
            if let Some(v) = valuation {
                cfg.valuation = match v {
                    ValuationArg::Fixed => ValuationModel::Fixed,
                    ValuationArg::DepthUniform => ValuationModel::depth_uniform_default(),
                };
            }
            if let Some(m) = mechanisms {
                cfg.mechanisms = m;
            }
            let g = load_graph(&cfg.graph)?;
            let r = run_experiment(&g, &cfg)?;
            match &common.out {
                Some(dir) => {
                    write_file(dir, "per_buyer.csv", &r.csv())?;
                    write_file(dir, "summary.json", &r.json())?;
                }
                None => print!("{}{}", r.csv(), r.json()),
            }
            Ok(Status::Ok)
        }
        Command::Verify {
            suite,
            common,
            samples,
            instances,
            price_rule,
        } => {
            let graph = match (&common.graph, &common.config) {
                (None, None) => None,
                _ => Some(load_graph(&base_config(&common)?.graph)?),
            };
            let opts = VerifyOptions {
                graph,
                instances,
                samples,
                seed: common.seed.unwrap_or(0),
                engine: engine(price_rule),
            };
            let outcomes = run_suites(suite, &opts)?;
            let mut failed = false;
            for o in &outcomes {
                match &common.out {
                    Some(dir) => write_file(dir, &format!("{}.txt", o.name), &o.text)?,
                    None => print!("{}", o.text),
                }
                println!("suite {} {}", o.name, if o.passed { "PASS" } else { "FAIL" });
                if !o.passed && !failed {
                    failed = true;
                    eprintln!(
                        "first violation ({}): {}",
                        o.name,
                        o.first_violation().unwrap_or("see report")
                    );
                }
            }
            Ok(if failed { Status::PropertyFailed } else { Status::Ok })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::PropertyFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
