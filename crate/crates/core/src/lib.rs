//! Spatiotemporal trend analysis of groundwater monitoring data.

pub mod analysis;
pub mod dataset;
pub mod export;
pub mod flow;
pub mod indicators;
pub mod stsmoother;
pub mod synth;
pub mod time;
pub mod welltrend;
