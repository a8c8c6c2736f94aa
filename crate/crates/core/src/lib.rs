//! GRAM: autoregressive generation of labeled graphs with a graph attention
//! mechanism whose projections carry shortest-path-indexed bias terms.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: labeled graphs, tensor encoding, BFS orderings, frontiers,
//!   shortest paths and per-node statistics, corpus I/O.
//! - [`tensor`]: a small dense tensor engine with reverse-mode differentiation
//!   and an Adam optimizer.
//! - [`attention`]: multi-head graph attention with distance-bucketed biases.
//! - [`model`]: the generator network (feature extractor, pooling, node and
//!   edge estimators) in its plain, A, B and AB variants.
//! - [`training`], [`sampler`]: teacher-forced likelihood training and
//!   autoregressive generation.
//! - [`datasets`], [`evaluation`]: synthetic corpora and kernel-MMD metrics.

pub mod attention;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod hash;
pub mod layers;
pub mod model;
pub mod sampler;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{LabeledGraph, NodeOrdering};
