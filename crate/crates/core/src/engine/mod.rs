//! The distributed sequential resale auction.
//!
//! A run has three stages: top-down diffusion of the sale information,
//! bottom-up aggregation of bids along chosen inviters, and top-down
//! allocation as a chain of local second-price auctions with reserve. Agents
//! are logically concurrent; the engine executes them in deterministic round
//! order and draws all randomness from per-agent seeded streams.

mod aggregation;
mod allocation;
mod auction;
mod diffusion;
mod ledger;
mod strategy;

use thiserror::Error;

pub use aggregation::{run_stage2_aggregation, AggregationForest};
pub use allocation::{run_stage3_allocation, ParticipantRule, ResaleTrace, Stage3};
pub use auction::{local_auction, LocalAuctionResult, PriceRule};
pub use diffusion::{run_stage1_diffusion, DiffusionGraph};
pub use ledger::{Ledger, LedgerRecord};
pub use strategy::{ComputeRule, PassRule, Strategy, StrategyProfile};

use crate::network::NodeIx;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("inviter graph contains a cycle through node #{0}")]
    InviterCycle(NodeIx),
    #[error(
        "manipulation detected: host #{host} claims reserve {claimed} but the ledger records {recorded:?}"
    )]
    LedgerMismatch {
        host: NodeIx,
        claimed: f64,
        recorded: Option<f64>,
    },
}

/// Engine-wide knobs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EngineConfig {
    pub price_rule: PriceRule,
}

/// Runs all three stages. Fully determined by `(strategies, seed)`.
/// Utilities follow from the trace and the true valuations, see
/// [`ResaleTrace::utilities`].
pub fn run_sra(strategies: &StrategyProfile, seed: u64) -> Result<ResaleTrace, EngineError> {
    run_sra_with(strategies, seed, &EngineConfig::default())
}

pub fn run_sra_with(
    strategies: &StrategyProfile,
    seed: u64,
    config: &EngineConfig,
) -> Result<ResaleTrace, EngineError> {
    let dg = run_stage1_diffusion(strategies.reported());
    run_sra_on_diffusion(&dg, strategies, seed, config)
}

/// Stages 2 and 3 on a precomputed diffusion graph; lets callers reuse Stage 1
/// across seeds.
pub fn run_sra_on_diffusion(
    dg: &DiffusionGraph,
    strategies: &StrategyProfile,
    seed: u64,
    config: &EngineConfig,
) -> Result<ResaleTrace, EngineError> {
    let mut forest = run_stage2_aggregation(dg, strategies, seed)?;
    let markups: Vec<f64> = (0..dg.len()).map(|i| strategies.reserve_markup(i)).collect();
    let stage = Stage3 {
        participants: ParticipantRule::Invitees(dg),
        host_bids: strategies.reported().bids(),
        reserve_markup: Some(&markups),
        price_rule: config.price_rule,
        prefer_toward: None,
    };
    run_stage3_allocation(&mut forest, &stage, &mut Ledger::new(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::net;
    use crate::network::{Network, SELLER};

    fn instance_a() -> Network {
        net(&["a", "c"], &[("a", 3.0, &["b"]), ("b", 7.0, &[]), ("c", 2.0, &[])])
    }

    fn instance_b() -> Network {
        net(&["a", "c"], &[("a", 1.0, &["b"]), ("b", 10.0, &[]), ("c", 2.0, &["b"])])
    }

    fn seed_where_b_reports_to(n: &Network, parent: NodeIx) -> u64 {
        let dg = run_stage1_diffusion(&n.truthful());
        let s = StrategyProfile::intended(n);
        (0..100)
            .find(|&seed| run_stage2_aggregation(&dg, &s, seed).unwrap().parents(2) == [parent])
            .unwrap()
    }

    #[test]
    fn instance_a_trace() {
        let n = instance_a();
        let (a, b, c) = (1, 2, 3);
        for seed in 0..10 {
            let t = run_sra(&StrategyProfile::intended(&n), seed).unwrap();
            assert_eq!(t.winner, Some(a));
            assert_eq!(t.revenue, 2.0);
            assert_eq!(t.resale_path, vec![SELLER, a]);
            assert_eq!(t.auctions[1].price, 2.0);
            assert_eq!(t.auctions[1].bids, vec![(b, 7.0)]);
            let u = t.utilities(&n);
            assert_eq!((u[a], u[b], u[c]), (1.0, 0.0, 0.0));
        }
        let t = run_sra(&StrategyProfile::intended(&n), 0).unwrap();
        assert_eq!(
            t.render(&n),
            "auction 1 host=S reserve=0 bids=[a:7, c:2] winner=a price=2\n\
             auction 2 host=a reserve=2 bids=[b:7] winner=- price=2\n\
             result winner=a revenue=2 path=S>a\n\
             payment a=2\n"
        );
    }

    #[test]
    fn instance_b_both_trees() {
        let n = instance_b();
        let (a, b, c) = (1, 2, 3);

        let t = run_sra(&StrategyProfile::intended(&n), seed_where_b_reports_to(&n, a)).unwrap();
        assert_eq!(t.winner, Some(b));
        assert_eq!(t.revenue, 2.0);
        assert_eq!(t.resale_path, vec![SELLER, a, b]);
        let u = t.utilities(&n);
        assert_eq!((u[a], u[b], u[c]), (0.0, 8.0, 0.0));

        let t = run_sra(&StrategyProfile::intended(&n), seed_where_b_reports_to(&n, c)).unwrap();
        assert_eq!(t.winner, Some(c));
        assert_eq!(t.revenue, 1.0);
        let u = t.utilities(&n);
        assert_eq!((u[a], u[b], u[c]), (0.0, 0.0, 1.0));
    }

    #[test]
    fn instance_b_winner_split_over_seeds() {
        let n = instance_b();
        let s = StrategyProfile::intended(&n);
        let wins_b = (0..4000).filter(|&seed| run_sra(&s, seed).unwrap().winner == Some(2)).count();
        let p = wins_b as f64 / 4000.0;
        // 3 standard errors of a fair coin over 4000 draws is about 0.024.
        assert!((p - 0.5).abs() < 0.024, "p = {p}");
    }

    #[test]
    fn no_buyers_seller_keeps() {
        let n = net(&[], &[("a", 5.0, &[])]);
        let t = run_sra(&StrategyProfile::intended(&n), 3).unwrap();
        assert_eq!(t.winner, None);
        assert_eq!(t.revenue, 0.0);
        assert!(t.utilities(&n).iter().all(|&u| u == 0.0));
        assert_eq!(t.auctions.len(), 1);
    }

    #[test]
    fn overbidding_to_eleven_hurts_c() {
        let n = instance_b();
        let c = 3;
        let s = StrategyProfile::intended(&n)
            .with_strategy(&n, c, Strategy { bid: 11.0, ..Strategy::intended(&n, c) })
            .unwrap();
        let t = run_sra(&s, seed_where_b_reports_to(&n, 1)).unwrap();
        assert_eq!(t.winner, Some(c));
        assert_eq!(t.auctions[0].price, 10.0);
        assert_eq!(t.utility(c, 2.0), -8.0);
    }

    #[test]
    fn overstated_reserve_is_detected() {
        let n = instance_a();
        let a = 1;
        let s = StrategyProfile::intended(&n)
            .with_strategy(&n, a, Strategy { reserve_markup: 0.5, ..Strategy::intended(&n, a) })
            .unwrap();
        let err = run_sra(&s, 0).unwrap_err();
        assert_eq!(err, EngineError::LedgerMismatch { host: a, claimed: 2.5, recorded: Some(2.0) });
        assert!(err.to_string().starts_with("manipulation detected"));
    }

    #[test]
    fn runs_are_deterministic() {
        let n = instance_b();
        let s = StrategyProfile::intended(&n);
        for seed in 0..20 {
            assert_eq!(run_sra(&s, seed).unwrap(), run_sra(&s, seed).unwrap());
        }
    }
}
