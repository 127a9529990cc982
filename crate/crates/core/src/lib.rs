//! Real-time navigation hazard detection: rule-based spatial analysis of
//! object detections fused with prompt-driven language-model assessment.

pub mod cli;
pub mod config;
pub mod eval;
pub mod gateway;
pub mod pipeline;
pub mod prompt;
pub mod setup;
pub mod spatial;
