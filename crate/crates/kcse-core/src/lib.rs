//! Commonsense class embeddings for zero-shot learning.
//!
//! The pipeline has two phases. Phase 1 parses a ConceptNet-style edge dump
//! into a multigraph ([`graph`]), extracts the class neighborhood, and trains
//! a relational graph-convolutional autoencoder ([`rgcn`] encoder plus
//! [`distmult`] decoder, driven by [`kg_train`]) on link prediction. Phase 2
//! reads per-class node embeddings out of the trained encoder ([`cse`]) and
//! fuses them with attribute/word embeddings inside two zero-shot baselines
//! ([`zsl`]).
//!
//! Everything trainable runs on the small dense reverse-mode engine in
//! [`tensor`]; [`synth`] generates self-contained synthetic benchmarks.

pub mod cse;
pub mod distmult;
pub mod embedding;
pub mod error;
pub mod graph;
pub mod kg_train;
pub mod rgcn;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod zsl;

pub use error::{Error, Result};
