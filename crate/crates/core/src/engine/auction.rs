use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::network::NodeIx;

/// How the selling price of a local auction is set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriceRule {
    /// max{reserve, second-highest bid}.
    #[default]
    SecondPriceWithReserve,
    /// max{reserve, highest bid}. Not incentive compatible; kept as a
    /// negative control for the property suites.
    FirstPrice,
}

/// Outcome of one local auction.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAuctionResult {
    pub host: NodeIx,
    /// Participant aggregated bids, sorted by node.
    pub bids: Vec<(NodeIx, f64)>,
    pub reserve: f64,
    pub first: f64,
    pub second: f64,
    /// `None` when the host keeps the item.
    pub winner: Option<NodeIx>,
    /// Selling price max{reserve, second}; charged only on a sale.
    pub price: f64,
}

/// Runs a second-price auction with reserve among `bids`.
///
/// A buyer host sells only when her own bid is strictly below the selling
/// price; the original seller (`host_is_seller`) sells whenever anyone bids.
/// Ties for the top bid go to `preferred` when it is among them, otherwise
/// uniformly at random.
pub fn local_auction(
    host: NodeIx,
    host_is_seller: bool,
    host_bid: f64,
    reserve: f64,
    mut bids: Vec<(NodeIx, f64)>,
    price_rule: PriceRule,
    preferred: Option<NodeIx>,
    rng: &mut ChaCha8Rng,
) -> LocalAuctionResult {
    bids.sort_by_key(|&(i, _)| i);
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    for &(_, b) in &bids {
        if b > first {
            second = first;
            first = b;
        } else if b > second {
            second = b;
        }
    }
    let top: Vec<NodeIx> = bids.iter().filter(|&&(_, b)| b == first).map(|&(i, _)| i).collect();
    if top.len() > 1 {
        second = first;
    }
    let price = match price_rule {
        PriceRule::SecondPriceWithReserve => reserve.max(second),
        PriceRule::FirstPrice => reserve.max(first),
    };
    let sells = !bids.is_empty() && (host_is_seller || host_bid < price);
    let winner = if sells {
        Some(match preferred.filter(|p| top.contains(p)) {
            Some(p) => p,
            None if top.len() == 1 => top[0],
            None => top[rng.gen_range(0..top.len())],
        })
    } else {
        None
    };
    LocalAuctionResult {
        host,
        bids,
        reserve,
        first,
        second,
        winner,
        price,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::auction_rng;

    fn run(host_is_seller: bool, host_bid: f64, reserve: f64, bids: &[(NodeIx, f64)]) -> LocalAuctionResult {
        local_auction(
            9,
            host_is_seller,
            host_bid,
            reserve,
            bids.to_vec(),
            PriceRule::default(),
            None,
            &mut auction_rng(0, 9),
        )
    }

    #[test]
    fn seller_sells_at_second_price() {
        let r = run(true, 0.0, 0.0, &[(3, 2.0), (1, 7.0)]);
        assert_eq!(r.winner, Some(1));
        assert_eq!(r.price, 2.0);
        assert_eq!(r.bids, vec![(1, 7.0), (3, 2.0)]);
        assert_eq!((r.first, r.second), (7.0, 2.0));
    }

    #[test]
    fn host_keeps_when_valuation_covers_price() {
        let r = run(false, 3.0, 2.0, &[(2, 7.0)]);
        assert_eq!(r.winner, None);
        assert_eq!(r.price, 2.0);
        assert_eq!(r.second, 0.0);
    }

    #[test]
    fn host_sells_below_price() {
        let r = run(false, 1.0, 2.0, &[(2, 10.0)]);
        assert_eq!(r.winner, Some(2));
        assert_eq!(r.price, 2.0);
    }

    #[test]
    fn empty_auction_keeps() {
        let r = run(true, 0.0, 0.0, &[]);
        assert_eq!(r.winner, None);
    }

    #[test]
    fn seller_sells_at_zero_price() {
        let r = run(true, 0.0, 0.0, &[(1, 0.0)]);
        assert_eq!(r.winner, Some(1));
        assert_eq!(r.price, 0.0);
    }

    #[test]
    fn ties_are_random_but_seeded_and_preferable() {
        let bids = [(1, 5.0), (2, 5.0), (3, 1.0)];
        let mut winners = std::collections::BTreeSet::new();
        for seed in 0..64 {
            let r = local_auction(0, true, 0.0, 0.0, bids.to_vec(), PriceRule::default(), None, &mut auction_rng(seed, 0));
            assert_eq!(r.price, 5.0);
            winners.insert(r.winner.unwrap());
        }
        assert_eq!(winners.into_iter().collect::<Vec<_>>(), vec![1, 2]);
        let r = local_auction(0, true, 0.0, 0.0, bids.to_vec(), PriceRule::default(), Some(2), &mut auction_rng(0, 0));
        assert_eq!(r.winner, Some(2));
    }

    #[test]
    fn first_price_rule() {
        let r = local_auction(0, true, 0.0, 0.0, vec![(1, 7.0), (2, 2.0)], PriceRule::FirstPrice, None, &mut auction_rng(0, 0));
        assert_eq!((r.winner, r.price), (Some(1), 7.0));
    }
}
