//! Shared fixtures for the benchmarks.

use burstsim_core::scenario::Scenario;
use burstsim_core::sim;

/// The replay scenario with every count multiplied by `scale`.
pub fn replay(scale: f64) -> Scenario {
    Scenario::paper_replay().scaled(scale).expect("replay scales")
}

/// Runs `scenario` once and returns the number of trace records.
pub fn run_once(scenario: &Scenario, seed: u64) -> usize {
    sim::run_with_seed(scenario, seed).expect("replay runs").trace.len()
}
