//! Sequential resale auctions over social networks.
//!
//! The crate contains the distributed mechanism ([`engine`]), its centralized
//! reduction over spanning trees ([`crm`]), two comparison mechanisms
//! ([`baselines`]), graph machinery ([`network`]) and the property suites
//! that exercise individual rationality, incentive compatibility and revenue
//! claims by exhaustive unilateral deviation ([`harness`]).

pub mod network;
pub mod engine;
pub mod rng;
pub mod outcome;
pub mod graph_file;
pub mod instances;
pub mod crm;
pub mod baselines;
pub mod harness;
