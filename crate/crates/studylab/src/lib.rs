//! Study harness over the femlab library: built-in manufactured problems,
//! key=value study configuration, (level, sigma) sweeps with flux recovery
//! and error bounds, constant calibration, and CSV reporting.

pub mod config;
pub mod problems;
pub mod report;
pub mod sweep;
