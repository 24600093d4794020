//! Comparison methods: a vanilla genetic algorithm and a uniform-random agent.

mod ga;
mod random_agent;

pub use ga::{best_sweep_row, ga_optimize, ga_population_sweep, GaConfig, GaResult, MutationMode, SweepRow};
pub use random_agent::{random_agent_deploy, RandomAgentReport};
