//! Task-oriented power allocation with multi-user scheduling for edge
//! learning: the closed-form scheduling rule, a parallel augmented-Lagrangian
//! solver, an accelerated proximal solver, baselines and a grid oracle.

pub mod channel;
pub mod config;
pub mod learning;
pub mod oracle_baselines;
pub mod problem;
pub mod scheduling;
pub mod solution;
pub mod solver_accel;
pub mod solver_parallel;

pub use channel::{composite_gains, sample_channels, scenario_gains, ChannelSet, GainMatrix};
pub use config::{load_scenario, load_scenario_file, Scenario, SolverOptions, TaskSpec};
pub use solution::{Method, Solution, SolverError, TraceRow};
