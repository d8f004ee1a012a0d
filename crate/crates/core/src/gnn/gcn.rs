use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{SupportId, WeightedAdjacency};
use crate::numerics::{DenseMatrix, ParamTensor};

/// Two-layer GCN: `logits = Â · (dropout(relu(Â X W1))) · W2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub w1: ParamTensor,
    pub w2: ParamTensor,
    pub dropout: f64,
}

/// Identifies the exact adjacency a forward pass used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AdjStamp(SupportId, u64);

impl AdjStamp {
    pub(crate) fn of(adj: &WeightedAdjacency) -> Self {
        let mut h = DefaultHasher::new();
        for v in adj.matrix().values() {
            v.to_bits().hash(&mut h);
        }
        AdjStamp(adj.support_id(), h.finish())
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    stamp: AdjStamp,
    x_shape: (usize, usize),
    /// X·W1
    xw: DenseMatrix,
    /// Â·X·W1 (pre-activation)
    pre: DenseMatrix,
    /// post-relu, post-dropout hidden layer
    hidden: DenseMatrix,
    /// dropout multipliers (0 or 1/(1−p)); empty in evaluation mode
    mask: Vec<f64>,
    /// hidden·W2
    hw: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnGrads {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    /// Gradient over the stored entries of the adjacency, when requested.
    pub adj: Option<Vec<f64>>,
}

impl GcnModel {
    pub fn init<R: Rng + ?Sized>(d: usize, hidden: usize, classes: usize, dropout: f64, rng: &mut R) -> Self {
        Self {
            w1: ParamTensor::new("gcn.w1", DenseMatrix::glorot(d, hidden, rng)),
            w2: ParamTensor::new("gcn.w2", DenseMatrix::glorot(hidden, classes, rng)),
            dropout,
        }
    }

    pub fn from_weights(w1: DenseMatrix, w2: DenseMatrix, dropout: f64) -> Result<Self> {
        if w1.cols() != w2.rows() {
            return Err(Error::dims("GcnModel", w1.cols(), w2.rows()));
        }
        Ok(Self {
            w1: ParamTensor::new("gcn.w1", w1),
            w2: ParamTensor::new("gcn.w2", w2),
            dropout,
        })
    }

    pub fn hidden(&self) -> usize {
        self.w1.value.cols()
    }

    pub fn classes(&self) -> usize {
        self.w2.value.cols()
    }

    /// Forward pass. Dropout is applied after the first layer only when an
    /// RNG is supplied (training mode).
    pub fn forward<R: Rng + ?Sized>(
        &self,
        adj: &WeightedAdjacency,
        x: &DenseMatrix,
        rng: Option<&mut R>,
    ) -> Result<(DenseMatrix, GcnCache)> {
        if adj.n() != x.rows() {
            return Err(Error::dims("gcn_forward", format!("{} feature rows", adj.n()), x.rows()));
        }
        if x.cols() != self.w1.value.rows() {
            return Err(Error::dims(
                "gcn_forward",
                format!("feature dim {}", self.w1.value.rows()),
                x.cols(),
            ));
        }
        let a = adj.matrix();
        let xw = x.matmul(&self.w1.value)?;
        let pre = a.spmm(&xw)?;
        let mut hidden = pre.map(|v| v.max(0.0));
        let mut mask = Vec::new();
        if let Some(rng) = rng {
            if self.dropout > 0.0 {
                let keep = 1.0 - self.dropout;
                mask = (0..hidden.as_slice().len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                for (h, m) in hidden.as_mut_slice().iter_mut().zip(&mask) {
                    *h *= m;
                }
            }
        }
        let hw = hidden.matmul(&self.w2.value)?;
        let logits = a.spmm(&hw)?;
        let cache = GcnCache {
            stamp: AdjStamp::of(adj),
            x_shape: x.shape(),
            xw,
            pre,
            hidden,
            mask,
            hw,
        };
        Ok((logits, cache))
    }

    /// Logits in evaluation mode.
    pub fn predict(&self, adj: &WeightedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.forward::<rand_chacha::ChaCha8Rng>(adj, x, None).map(|(l, _)| l)
    }

    pub fn backward(
        &self,
        cache: &GcnCache,
        adj: &WeightedAdjacency,
        x: &DenseMatrix,
        d_logits: &DenseMatrix,
        want_adj_grad: bool,
    ) -> Result<GcnGrads> {
        if AdjStamp::of(adj) != cache.stamp || x.shape() != cache.x_shape {
            return Err(Error::Precondition("stale forward cache".into()));
        }
        if d_logits.shape() != (x.rows(), self.classes()) {
            return Err(Error::dims(
                "gcn_backward",
                format!("{:?}", (x.rows(), self.classes())),
                format!("{:?}", d_logits.shape()),
            ));
        }
        let a = adj.matrix();
        // logits = A · hw
        let d_hw = a.spmm_t(d_logits)?;
        let w2 = cache.hidden.matmul_tn(&d_hw)?;
        let mut d_hidden = d_hw.matmul_nt(&self.w2.value)?;
        if !cache.mask.is_empty() {
            for (g, m) in d_hidden.as_mut_slice().iter_mut().zip(&cache.mask) {
                *g *= m;
            }
        }
        let d_pre = {
            let mut g = d_hidden;
            for (g, &p) in g.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            g
        };
        // pre = A · xw
        let d_xw = a.spmm_t(&d_pre)?;
        let w1 = x.matmul_tn(&d_xw)?;
        let adj_grad = if want_adj_grad {
            let g2 = a.sampled_dot(d_logits, &cache.hw)?;
            let g1 = a.sampled_dot(&d_pre, &cache.xw)?;
            Some(g2.into_iter().zip(g1).map(|(p, q)| p + q).collect())
        } else {
            None
        };
        Ok(GcnGrads {
            w1,
            w2,
            adj: adj_grad,
        })
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor; 2] {
        [&mut self.w1, &mut self.w2]
    }
}
