//! Evaluation harness: class splits, detection and classification
//! metrics, a synthetic corpus generator, and the grid-experiment driver.

pub mod experiment;
pub mod metrics;
pub mod splits;
pub mod synth;
