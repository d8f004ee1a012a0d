use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{SparseMatrix, SupportId, WeightedAdjacency};
use crate::numerics::{sigmoid, ParamTensor};
use crate::uncertainty::{UncertaintySource, UncertaintyVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnGslConfig {
    /// Amplification of edges from confident neighbors.
    pub tau: f64,
    /// Weight multiplier for edges from low-confidence neighbors.
    pub beta: f64,
    /// Adam learning rate of the node-wise thresholds.
    pub eps_lr: f64,
}

impl Default for UnGslConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            beta: 0.5,
            eps_lr: 0.01,
        }
    }
}

impl UnGslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidInput("tau must be > 0".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidInput("beta must be ≥ 0".into()));
        }
        if !(self.eps_lr > 0.0) {
            return Err(Error::InvalidInput("eps_lr must be > 0".into()));
        }
        Ok(())
    }
}

/// Edge multiplier `ψ(x)` and its derivative: `τ·s(x)` for `x ≥ 0`, `β` below.
/// At exactly `x = 0` the smooth branch (and its slope) is used.
#[inline]
pub fn psi(x: f64, cfg: &UnGslConfig) -> (f64, f64) {
    if x >= 0.0 {
        let s = sigmoid(x);
        (cfg.tau * s, cfg.tau * s * (1.0 - s))
    } else {
        (cfg.beta, 0.0)
    }
}

/// Learnable per-node thresholds `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    pub param: ParamTensor,
}

impl ThresholdVector {
    /// Uniform random initialization in `[0, 1]`.
    pub fn init<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::from_values((0..n).map(|_| rng.random_range(0.0..=1.0)).collect())
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            param: ParamTensor::vector("ungsl.epsilon", values),
        }
    }

    pub fn len(&self) -> usize {
        self.param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.param.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.param.value.as_slice()
    }
}

/// `Ŝ` together with what is needed to differentiate it.
#[derive(Debug, Clone)]
pub struct RefinedAdjacency {
    matrix: WeightedAdjacency,
    base_support: SupportId,
    source: UncertaintySource,
    base_values: Vec<f64>,
    multipliers: Vec<f64>,
    slopes: Vec<f64>,
    rows: Vec<usize>,
    psi_evaluations: usize,
}

impl RefinedAdjacency {
    pub fn matrix(&self) -> &WeightedAdjacency {
        &self.matrix
    }

    pub fn into_matrix(self) -> WeightedAdjacency {
        self.matrix
    }

    pub fn base_support(&self) -> SupportId {
        self.base_support
    }

    pub fn uncertainty_source(&self) -> UncertaintySource {
        self.source
    }

    /// Per-entry `ψ` factor (1 on self-loops).
    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    /// Number of `ψ` evaluations this call made: one per stored off-diagonal entry.
    pub fn psi_evaluations(&self) -> usize {
        self.psi_evaluations
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReweightGrads {
    /// `∂L/∂ε`, one per node.
    pub eps: Vec<f64>,
    /// `∂L/∂S` over the stored entries of the base structure.
    pub base: Vec<f64>,
}

/// `Ŝ_ij = S_ij · ψ(c_j − ε_i)` for every stored off-diagonal entry; self-loops
/// are left unscaled. One pass over the stored entries, no new edges.
pub fn reweight(
    s: &WeightedAdjacency,
    u: &UncertaintyVector,
    eps: &[f64],
    cfg: &UnGslConfig,
) -> Result<RefinedAdjacency> {
    let n = s.n();
    if u.len() != n || eps.len() != n {
        return Err(Error::dims(
            "reweight",
            format!("{n} nodes"),
            format!("{} confidences, {} thresholds", u.len(), eps.len()),
        ));
    }
    let c = u.confidence();
    let m = s.matrix();
    let mut values = Vec::with_capacity(m.nnz());
    let mut multipliers = Vec::with_capacity(m.nnz());
    let mut slopes = Vec::with_capacity(m.nnz());
    let mut rows = Vec::with_capacity(m.nnz());
    let mut evals = 0;
    for (i, j, w) in m.iter() {
        let (f, df) = if i == j {
            (1.0, 0.0)
        } else {
            evals += 1;
            psi(c[j] - eps[i], cfg)
        };
        values.push(w * f);
        multipliers.push(f);
        slopes.push(df);
        rows.push(i);
    }
    let matrix = WeightedAdjacency::new(m.with_values(values)?)?;
    Ok(RefinedAdjacency {
        matrix,
        base_support: s.support_id(),
        source: u.source(),
        base_values: m.values().to_vec(),
        multipliers,
        slopes,
        rows,
        psi_evaluations: evals,
    })
}

/// Gradients of the loss with respect to `ε` and the base entries, given
/// `d_hat = ∂L/∂Ŝ` laid out over the support of `refined`.
pub fn reweight_backward(refined: &RefinedAdjacency, d_hat: &SparseMatrix) -> Result<ReweightGrads> {
    if d_hat.support_id() != refined.matrix.support_id() {
        return Err(Error::ProvenanceMismatch(
            "gradient support differs from the refined adjacency".into(),
        ));
    }
    let n = refined.matrix.n();
    let mut eps = vec![0.0; n];
    let mut base = Vec::with_capacity(d_hat.nnz());
    for (e, &g) in d_hat.values().iter().enumerate() {
        base.push(g * refined.multipliers[e]);
        let slope = refined.slopes[e];
        if slope != 0.0 {
            // ∂ψ(c_j − ε_i)/∂ε_i = −ψ'
            eps[refined.rows[e]] -= g * refined.base_values[e] * slope;
        }
    }
    Ok(ReweightGrads { eps, base })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tau: f64, beta: f64) -> UnGslConfig {
        UnGslConfig {
            tau,
            beta,
            eps_lr: 0.01,
        }
    }

    fn conf(c: &[f64]) -> UncertaintyVector {
        UncertaintyVector::from_uncertainty(c.iter().map(|v| -v.ln()).collect(), UncertaintySource::Entropy)
            .unwrap()
    }

    #[test]
    fn psi_values() {
        let c = cfg(2.0, 0.4);
        assert_eq!(psi(0.0, &c).0, 1.0);
        assert_eq!(psi(-0.3, &c), (0.4, 0.0));
        // 2/(1+e^-0.2) to 40 digits: 1.099667994624955817118...
        assert!((psi(0.2, &c).0 - 1.099_667_994_624_955_8).abs() < 1e-15);
        assert_eq!(psi(0.0, &cfg(3.0, 0.1)).0, 1.5);
    }

    #[test]
    fn all_confident_zero_thresholds_scale_uniformly() {
        let s = WeightedAdjacency::from_undirected(4, vec![(0, 1, 0.5), (1, 2, 1.0), (2, 3, 2.0), (3, 3, 1.0)])
            .unwrap();
        let u = UncertaintyVector::constant(4, 0.0).unwrap();
        let r = reweight(&s, &u, &[0.0; 4], &cfg(2.0, 0.3)).unwrap();
        let k = 2.0 * sigmoid(1.0);
        for ((i, j, w), (_, _, w0)) in r.matrix().matrix().iter().zip(s.matrix().iter()) {
            if i == j {
                assert_eq!(w, w0);
            } else {
                assert_eq!(w, w0 * k);
            }
        }
        assert_eq!(r.psi_evaluations(), 6);
    }

    #[test]
    fn low_confidence_source_gets_beta() {
        let s = WeightedAdjacency::from_undirected(3, vec![(0, 1, 0.7), (1, 2, 0.9), (0, 2, 0.2)]).unwrap();
        let u = conf(&[0.9, 0.05, 0.8]);
        let eps = [0.5, 0.5, 0.5];
        let r = reweight(&s, &u, &eps, &cfg(2.0, 0.25)).unwrap();
        let m = r.matrix().matrix();
        assert_eq!(m.get(0, 1), 0.25 * 0.7);
        assert_eq!(m.get(2, 1), 0.25 * 0.9);
        assert!(r.matrix().matrix().support_subset_of(s.matrix()));
    }

    #[test]
    fn four_node_entrywise() {
        let s = WeightedAdjacency::from_edges(
            4,
            vec![(0, 1, 0.3), (0, 3, 1.2), (1, 0, 0.3), (1, 2, 0.8), (2, 3, 0.5), (3, 0, 0.9), (3, 3, 0.4)],
        )
        .unwrap();
        let c = [0.95, 0.2, 0.6, 0.45];
        let u = conf(&c);
        let eps = [0.5, 0.1, 0.7, 0.3];
        let cf = cfg(2.0, 0.2);
        let r = reweight(&s, &u, &eps, &cf).unwrap();
        for (i, j, w) in s.matrix().iter() {
            let x = u.confidence()[j] - eps[i];
            let f = if i == j {
                1.0
            } else if x >= 0.0 {
                2.0 / (1.0 + (-x).exp())
            } else {
                0.2
            };
            assert!((r.matrix().matrix().get(i, j) - w * f).abs() < 1e-15, "({i},{j})");
        }
    }

    #[test]
    fn beta_zero_removes_weight() {
        let s = WeightedAdjacency::from_undirected(2, vec![(0, 1, 1.0)]).unwrap();
        let u = conf(&[0.1, 0.1]);
        let r = reweight(&s, &u, &[0.9, 0.9], &cfg(2.0, 0.0)).unwrap();
        assert!(r.matrix().matrix().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn asymmetry_on_mutual_edge() {
        let s = WeightedAdjacency::from_undirected(2, vec![(0, 1, 1.0)]).unwrap();
        let u = conf(&[0.9, 0.2]);
        let r = reweight(&s, &u, &[0.5, 0.5], &cfg(2.0, 0.5)).unwrap();
        let m = r.matrix().matrix();
        assert_ne!(m.get(0, 1), m.get(1, 0));
        assert!(m.get(1, 0) > m.get(0, 1));
    }

    #[test]
    fn backward_branches() {
        let s = WeightedAdjacency::from_undirected(3, vec![(0, 1, 0.7), (1, 2, 0.9)]).unwrap();
        let u = conf(&[0.1, 0.2, 0.1]);
        let r = reweight(&s, &u, &[0.9, 0.9, 0.9], &cfg(2.0, 0.5)).unwrap();
        let d = r.matrix().matrix().with_values(vec![1.0; 4]).unwrap();
        let g = reweight_backward(&r, &d).unwrap();
        assert!(g.eps.iter().all(|&v| v == 0.0));
        assert!(g.base.iter().all(|&v| v == 0.5));

        let zero = r.matrix().matrix().with_values(vec![0.0; 4]).unwrap();
        let g = reweight_backward(&r, &zero).unwrap();
        assert!(g.eps.iter().chain(&g.base).all(|&v| v == 0.0));

        let other = SparseMatrix::identity(3);
        assert!(matches!(reweight_backward(&r, &other), Err(Error::ProvenanceMismatch(_))));
    }

    #[test]
    fn size_mismatch() {
        let s = WeightedAdjacency::identity(3);
        let u = UncertaintyVector::constant(2, 0.1).unwrap();
        assert!(reweight(&s, &u, &[0.0; 3], &UnGslConfig::default()).is_err());
    }
}
