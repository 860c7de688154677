//! Dense correspondences across collections of non-rigid triangle meshes.
//!
//! Pairs are matched with a hierarchical optimal-transport scheme over
//! spectral shell embeddings; a shape graph built from the pairwise
//! matching energies then propagates maps along shortest paths.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod graph;
pub mod matching;
pub mod mesh;
pub mod pipeline;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
