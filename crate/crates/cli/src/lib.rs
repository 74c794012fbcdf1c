//! Command-line runner, run directories, reports and the feedback service.

pub mod bench;
pub mod config;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod service;
