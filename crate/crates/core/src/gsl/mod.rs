//! Embedding-based structure learners: a residual similarity graph and a
//! metric kNN graph, both rebuilt every epoch from a trainable encoder.

mod config;
mod knn;
mod learner;
mod regularize;

pub use config::{GslConfig, GslMethod, Regularizer, Similarity};
pub use knn::{knn_graph, pairwise_scores, select_top_k, KnnTrace, ScoreTransform};
pub use learner::{structure_operator, train_gsl, BuiltStructure, LearnerGrads, LearnerSnapshot, StructureLearner};
pub use regularize::{regularize, Penalty};
