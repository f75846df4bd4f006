//! Library surface of the experiment runner, shared by the `mlda` binary
//! and the acceptance test suite.

pub mod config;
pub mod experiment;
pub mod report;
pub mod runner;
