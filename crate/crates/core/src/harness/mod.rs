//! Vehicle descriptions, config files, trace files, reports and the CLI.

pub mod vehicle;
pub mod config;
pub mod tracefile;
pub mod fleet;
pub mod cli;
pub mod report;
