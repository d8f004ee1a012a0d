use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GslMethod {
    /// `S = Â + K̂` with `K` the kNN graph of `σ(E Eᵀ)`, a residual on top
    /// of the input graph.
    SimilarityResidual,
    /// `S = α·K̂ + (1 − α)·Â` with `K` the kNN graph of cosine scores.
    MetricKnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    InnerProduct,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    L1Sparsity,
    Smoothness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GslConfig {
    pub method: GslMethod,
    /// Neighbors kept per node by the top-k step.
    pub k: usize,
    /// Weight of the learned graph against the input graph (metric kNN only).
    pub alpha: f64,
    /// Regularizer trade-off.
    pub lambda: f64,
    pub regularizers: Vec<Regularizer>,
    pub encoder_width: usize,
    /// Pairwise score; `None` picks the method's usual choice.
    pub similarity: Option<Similarity>,
}

impl Default for GslConfig {
    fn default() -> Self {
        Self {
            method: GslMethod::MetricKnn,
            k: 10,
            alpha: 0.5,
            lambda: 0.0,
            regularizers: Vec::new(),
            encoder_width: 32,
            similarity: None,
        }
    }
}

impl GslConfig {
    pub fn similarity_residual() -> Self {
        Self {
            method: GslMethod::SimilarityResidual,
            ..Self::default()
        }
    }

    pub fn metric_knn() -> Self {
        Self::default()
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity.unwrap_or(match self.method {
            GslMethod::SimilarityResidual => Similarity::InnerProduct,
            GslMethod::MetricKnn => Similarity::Cosine,
        })
    }

    /// Weights of the kNN graph and of the input graph in `S`.
    pub fn mixing(&self) -> (f64, f64) {
        match self.method {
            GslMethod::SimilarityResidual => (1.0, 1.0),
            GslMethod::MetricKnn => (self.alpha, 1.0 - self.alpha),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidInput("k must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput("alpha must lie in [0, 1]".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput("lambda must be ≥ 0".into()));
        }
        if self.encoder_width == 0 {
            return Err(Error::InvalidInput("encoder_width must be ≥ 1".into()));
        }
        Ok(())
    }
}
