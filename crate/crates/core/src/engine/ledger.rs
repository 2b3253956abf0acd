use super::EngineError;
use crate::network::{NodeIx, SELLER};

/// One completed resale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRecord {
    /// Position of the local auction in the resale sequence, from 1.
    pub stage: usize,
    pub host: NodeIx,
    pub winner: NodeIx,
    pub price: f64,
}

/// Append-only record of purchasing prices. Records are public and cannot be
/// edited; a host's claimed reserve is checked against the record in which
/// she bought the item.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, host: NodeIx, winner: NodeIx, price: f64) -> &LedgerRecord {
        let stage = self.records.len() + 1;
        self.records.push(LedgerRecord {
            stage,
            host,
            winner,
            price,
        });
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    /// Price `node` paid for the item, if she ever bought it.
    pub fn purchase_price(&self, node: NodeIx) -> Option<f64> {
        self.records.iter().rev().find(|r| r.winner == node).map(|r| r.price)
    }

    /// The seller's reserve must be 0; any other host's reserve must equal
    /// her recorded purchase price.
    pub fn verify_reserve(&self, host: NodeIx, claimed: f64) -> Result<(), EngineError> {
        let recorded = if host == SELLER {
            Some(0.0)
        } else {
            self.purchase_price(host)
        };
        if recorded == Some(claimed) {
            Ok(())
        } else {
            Err(EngineError::LedgerMismatch {
                host,
                claimed,
                recorded,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verification() {
        let mut l = Ledger::new();
        assert!(l.verify_reserve(SELLER, 0.0).is_ok());
        assert!(l.verify_reserve(SELLER, 1.0).is_err());
        l.append(SELLER, 2, 3.5);
        assert_eq!(l.records()[0].stage, 1);
        assert!(l.verify_reserve(2, 3.5).is_ok());
        assert_eq!(
            l.verify_reserve(2, 4.0),
            Err(EngineError::LedgerMismatch { host: 2, claimed: 4.0, recorded: Some(3.5) })
        );
        assert!(matches!(
            l.verify_reserve(5, 0.0),
            Err(EngineError::LedgerMismatch { recorded: None, .. })
        ));
    }
}
