//! Open-set malware family recognition over function call graphs.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`extract`]: parse disassembly listings, cluster functions by opcode
//!    similarity (MinHash/LSH), and build a call graph over cluster ids.
//! 2. [`adjacency`]: embed graphs into fixed-size adjacency tensors.
//! 3. [`transforms`]: structure-preserving and structure-discarding graph
//!    transformations used as the self-supervised pretext task.
//! 4. [`nn`] and [`pipeline`]: a small dense-network engine, pre-training by
//!    reconstructing originals from transformed views, and fine-tuning with
//!    cross-entropy or triplet loss.
//! 5. [`osr`]: prototype statistics over embeddings and an outlier score
//!    that routes distant samples to an UNKNOWN class.
//! 6. [`eval`]: splits, ranking and classification metrics, a synthetic
//!    corpus generator, and the experiment grid runner.

pub mod adjacency;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod extract;
pub mod graph;
pub mod nn;
pub mod osr;
pub mod pipeline;
pub mod seeding;
pub mod stats;
pub mod transforms;

pub use error::{Error, Result};
