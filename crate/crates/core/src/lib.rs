//! Uncertainty-aware graph structure learning.
//!
//! The crate is layered bottom-up:
//!
//! - [`graph`]: CSR adjacency, normalizations, dataset container and file format.
//! - [`numerics`]: dense kernels, Adam, finite-difference checks.
//! - [`gnn`]: two-layer GCN and SGC with hand-derived backward passes.
//! - [`uncertainty`]: entropy and contrastive per-node uncertainty.
//! - [`gsl`]: embedding-based structure learners.
//! - [`plugin`]: confidence-thresholded asymmetric edge reweighting.
//! - [`theory`]: numerical checks of the entropy lower bound for aggregation.

pub mod error;
pub mod gnn;
pub mod gsl;
pub mod graph;
pub mod numerics;
pub mod plugin;
pub mod seed;
pub mod theory;
pub mod uncertainty;

pub use error::{Error, Result};
