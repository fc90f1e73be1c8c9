//! Per-node stability analysis for graph-in/vector-out mappings.
//!
//! Given a graph with node features and the per-node output vectors of any
//! mapping over it (a GNN, a propagation model, anything that turns nodes
//! into vectors), this crate measures how much the mapping distorts
//! distances between nearby nodes, and ranks nodes from stable to unstable.
//!
//! The pipeline has three phases:
//!
//! 1. **Spectral embedding** ([`embed`]): a resistance-preserving
//!    low-dimensional embedding of the input graph from the smallest
//!    nonzero Laplacian eigenpairs.
//! 2. **Manifold construction** ([`manifold`]): dense kNN graphs over the
//!    embedding (input side) and over the output vectors (output side),
//!    each spectrally sparsified via low-resistance-diameter clustering and
//!    per-cluster spanning-tree backbones.
//! 3. **Stability scoring** ([`dmd`]): distance-mapping distortion between
//!    the two manifolds through the top generalized eigenpairs of their
//!    Laplacian pencil, giving per-edge and per-node scores.
//!
//! [`modelsim`] supplies a self-contained surrogate model plus perturbation
//! generators so the whole loop runs without any external ML framework, and
//! [`enhance`] feeds the spectrally critical inter-cluster manifold edges
//! back into the original graph.

pub mod dense;
pub mod dmd;
pub mod embed;
pub mod enhance;
pub mod error;
pub mod gen;
pub mod graph;
pub mod io;
pub mod manifold;
pub mod matrix;
pub mod modelsim;
pub mod resistance;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use graph::{Edge, Laplacian, SparseGraph};
