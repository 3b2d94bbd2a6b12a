//! Data-generation pipeline for driving instruction datasets: scenario
//! ingestion, scene graphs and QA, motion windows, meta-action labels,
//! justifications, dataset emission and evaluation metrics.

pub mod canonical;
pub mod config;
pub mod emit;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod justify;
pub mod meta_action;
pub mod metrics;
pub mod motion;
pub mod qa_gen;
pub mod scene_graph;

#[cfg(test)]
mod test_support;

pub use error::{Error, Finding, Result};
