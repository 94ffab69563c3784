//! Deterministic simulator for over-collateralized lending pools around a chain split.
//!
//! Amounts are 18-decimal fixed point, rates and indices 27-decimal. All arithmetic is
//! integer so that replays are bit-identical.

pub mod fixed;
pub mod fork_arb;
pub mod ids;
pub mod market;
pub mod rates;
pub mod risk;
pub mod scenario;
