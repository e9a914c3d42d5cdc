//! Relation-graph text encoding and dual-path cross-modal retrieval.
//!
//! Texts are mapped onto one shared graph over a noun vocabulary. Edges come
//! from three views (embedding k-nearest neighbours, sentence co-occurrence,
//! knowledge-graph triples) fused by union. A two-layer graph convolution
//! encodes a text's node features, a linear projection encodes precomputed
//! image features, and a sigmoid head over their elementwise product scores
//! the pair. Retrieval quality is measured with MAP@K in both directions.
//!
//! This crate is `no_std` (with `alloc`). File formats, the pipeline and the
//! command line live in the `xmr` crate.

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod embedstore;
pub mod error;
pub mod evalkit;
pub mod kgstore;
pub mod model;
pub mod numerics;
pub mod relgraph;
pub mod trainer;

pub use error::{Error, Result};
