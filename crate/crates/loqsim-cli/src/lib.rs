//! Scenario-driven front end for the `loqsim` toolkit: parse a scenario
//! description, expand presets, run the requested stage (solve, optimize,
//! verify, schedule, compile, simulate, compare, render), and emit
//! line-oriented reports plus optional graph artifacts.

pub mod fixtures;
pub mod presets;
pub mod render;
pub mod report;
pub mod run;
pub mod scenario;
