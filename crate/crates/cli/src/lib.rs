//! Batch runner for the verification scenarios: parse a scenario, build the
//! mesh and family, run the checks and write reports.

pub mod catalog;
pub mod checks;
pub mod converge;
pub mod emit;
pub mod runner;
pub mod scenario;
