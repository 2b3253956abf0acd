//! Expected outcomes shared by every mechanism: allocation probability,
//! expected payment and expected utility per buyer, plus seller revenue.

use std::fmt::Write as _;

use serde::Serialize;

use crate::network::{Network, NodeIx};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuyerOutcome {
    pub id: String,
    pub win_probability: f64,
    pub expected_payment: f64,
    pub expected_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeSummary {
    /// One row per buyer in canonical order (node index − 1).
    pub buyers: Vec<BuyerOutcome>,
    pub revenue: f64,
    /// Number of spanning trees, sampled trees or seeds averaged over.
    pub count: u64,
}

impl OutcomeSummary {
    pub fn buyer(&self, node: NodeIx) -> &BuyerOutcome {
        &self.buyers[node - 1]
    }

    pub fn by_id(&self, id: &str) -> Option<&BuyerOutcome> {
        self.buyers.iter().find(|b| b.id == id)
    }

    /// Tabular text: a header line with the count and revenue, then one row
    /// per buyer.
    pub fn render(&self) -> String {
        let mut out = format!("count={} revenue={}\nid,pi,expected_payment,expected_utility\n", self.count, self.revenue);
        for b in &self.buyers {
            let _ = writeln!(out, "{},{},{},{}", b.id, b.win_probability, b.expected_payment, b.expected_utility);
        }
        out
    }
}

/// Weighted running sums of allocations and payments. Merging is associative,
/// so per-tree or per-seed work can be fanned out.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeAccumulator {
    win: Vec<f64>,
    pay: Vec<f64>,
    pay_sq: Vec<f64>,
    revenue: f64,
    weight: f64,
    count: u64,
}

impl OutcomeAccumulator {
    pub fn new(nodes: usize) -> Self {
        Self {
            win: vec![0.0; nodes],
            pay: vec![0.0; nodes],
            pay_sq: vec![0.0; nodes],
            revenue: 0.0,
            weight: 0.0,
            count: 0,
        }
    }

    pub fn add(&mut self, weight: f64, winner: Option<NodeIx>, payments: &[f64], revenue: f64) {
        if let Some(w) = winner {
            self.win[w] += weight;
        }
        for (i, &p) in payments.iter().enumerate() {
            self.pay[i] += weight * p;
            self.pay_sq[i] += weight * p * p;
        }
        self.revenue += weight * revenue;
        self.weight += weight;
    }

    /// Counts one averaged unit (tree or sample) without adding outcomes.
    pub fn count_unit(&mut self) {
        self.count += 1;
    }

    pub fn merge(mut self, other: Self) -> Self {
        for i in 0..self.win.len() {
            self.win[i] += other.win[i];
            self.pay[i] += other.pay[i];
            self.pay_sq[i] += other.pay_sq[i];
        }
        self.revenue += other.revenue;
        self.weight += other.weight;
        self.count += other.count;
        self
    }

    pub fn total_weight(&self) -> f64 {
        self.weight
    }

    /// Standard errors of the mean allocation and payment per node, treating
    /// each added outcome as one unit-weight sample.
    pub fn standard_errors(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.weight;
        let se = |mean: f64, mean_sq: f64| {
            if n > 1.0 {
                ((mean_sq - mean * mean).max(0.0) / (n - 1.0)).sqrt()
            } else {
                0.0
            }
        };
        let win = self.win.iter().map(|&w| se(w / n, w / n)).collect();
        let pay = self
            .pay
            .iter()
            .zip(&self.pay_sq)
            .map(|(&p, &q)| se(p / n, q / n))
            .collect();
        (win, pay)
    }

    pub fn finish(&self, network: &Network) -> OutcomeSummary {
        let norm = if self.weight > 0.0 { self.weight } else { 1.0 };
        let buyers = network
            .buyers()
            .map(|i| {
                let pi = self.win[i] / norm;
                let p = self.pay[i] / norm;
                BuyerOutcome {
                    id: network.name(i).to_string(),
                    win_probability: pi,
                    expected_payment: p,
                    expected_utility: pi * network.valuation(i) - p,
                }
            })
            .collect();
        OutcomeSummary {
            buyers,
            revenue: self.revenue / norm,
            count: self.count,
        }
    }
}
