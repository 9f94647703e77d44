//! Independent checks of a solution: grid value iteration and Monte Carlo
//! simulation of threshold policies.

pub mod grid;
pub mod simulate;

pub use grid::{value_iteration, GridScheme, IterationReport, OracleError, ProbeGap, Spacing};
pub use simulate::{simulate_policy, SimulationConfig, SimulationEstimate};
