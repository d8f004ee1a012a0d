//! Sparse adjacency storage, graph datasets and the normalizations the
//! models consume.

mod adjacency;
mod dataset;
pub mod io;
mod sparse;

pub use adjacency::{
    combine, normalize, normalize_traced, symmetrize, symmetrize_traced, CombineTrace, NormMode,
    Normalization, SymmetrizeTrace, WeightedAdjacency,
};
pub use dataset::{Graph, SplitMasks};
pub use sparse::{SparseMatrix, SupportId};
