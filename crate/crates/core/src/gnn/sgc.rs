use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::WeightedAdjacency;
use crate::numerics::{DenseMatrix, ParamTensor};

/// Simplified graph convolution: `logits = Â^k X W`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgcModel {
    pub k: usize,
    pub w: ParamTensor,
}

impl SgcModel {
    pub fn init<R: Rng + ?Sized>(k: usize, d: usize, classes: usize, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("SGC propagation depth must be ≥ 1".into()));
        }
        Ok(Self {
            k,
            w: ParamTensor::new("sgc.w", DenseMatrix::glorot(d, classes, rng)),
        })
    }

    /// `Â^k X` by `k` successive sparse products.
    pub fn propagate(&self, adj: &WeightedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = adj.matrix().spmm(x)?;
        for _ in 1..self.k {
            z = adj.matrix().spmm(&z)?;
        }
        Ok(z)
    }

    pub fn forward(&self, adj: &WeightedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.logits(&self.propagate(adj, x)?)
    }

    /// Logits from already-propagated features.
    pub fn logits(&self, propagated: &DenseMatrix) -> Result<DenseMatrix> {
        if propagated.cols() != self.w.value.rows() {
            return Err(Error::dims("sgc_forward", self.w.value.rows(), propagated.cols()));
        }
        propagated.matmul(&self.w.value)
    }

    pub fn backward(&self, propagated: &DenseMatrix, d_logits: &DenseMatrix) -> Result<DenseMatrix> {
        propagated.matmul_tn(d_logits)
    }
}
