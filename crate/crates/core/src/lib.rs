//! Approximate transshipment and single-source shortest paths on weighted
//! undirected graphs, built from l1 embeddings, a randomly shifted grid
//! oblivious routing matrix and a multiplicative-weights solver.

pub mod embedding;
pub mod error;
pub mod gen;
pub mod graph;
pub mod io;
pub mod oracles;
pub mod pipeline;
pub mod rng;
pub mod routing;
pub mod solver;
pub mod sparsify;
pub mod sssp;

pub use error::{Error, Result};
pub use graph::{Edge, Graph, SsspPotential};
