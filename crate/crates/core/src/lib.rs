//! Quality-aware decoding for machine translation.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod exact;
pub mod generation;
pub mod mbr;
pub mod mert;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod rerank;
pub mod toy_model;
pub mod toy_task;
