//! Per-node uncertainty: Shannon entropy of class probabilities (supervised)
//! or a contrastive-loss proxy (unsupervised), and the confidence
//! `c = e^(−u)` consumed by edge reweighting.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, WeightedAdjacency};
use crate::numerics::{log_sum_exp, norm, softmax_rows, DenseMatrix};

/// Row-normalization slack accepted by [`ProbMatrix::new`].
pub const PROB_TOL: f64 = 1e-6;

/// Rows of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix(DenseMatrix);

impl ProbMatrix {
    pub fn new(p: DenseMatrix) -> Result<Self> {
        for i in 0..p.rows() {
            let row = p.row(i);
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has a negative or non-finite probability")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidInput(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(Self(p))
    }

    pub fn from_logits(logits: &DenseMatrix) -> Self {
        Self(softmax_rows(logits))
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintySource {
    Entropy,
    Contrastive,
}

/// Frozen per-node uncertainty `u` (nats) and confidence `c = e^(−u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyVector {
    entropy: Vec<f64>,
    confidence: Vec<f64>,
    source: UncertaintySource,
}

impl UncertaintyVector {
    pub fn from_uncertainty(u: Vec<f64>, source: UncertaintySource) -> Result<Self> {
        if let Some(i) = u.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "uncertainty of node {i} is {} (must be finite and ≥ 0)",
                u[i]
            )));
        }
        let confidence = u.iter().map(|&v| (-v).exp()).collect();
        Ok(Self {
            entropy: u,
            confidence,
            source,
        })
    }

    /// Uniform uncertainty; handy for degenerate checks.
    pub fn constant(n: usize, u: f64) -> Result<Self> {
        Self::from_uncertainty(vec![u; n], UncertaintySource::Entropy)
    }

    pub fn len(&self) -> usize {
        self.entropy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entropy.is_empty()
    }

    pub fn entropy(&self) -> &[f64] {
        &self.entropy
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn source(&self) -> UncertaintySource {
        self.source
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_with(path, None)
    }

    /// CSV `node_id,entropy,confidence[,epsilon]`.
    pub fn write_csv_with(&self, path: &Path, thresholds: Option<&[f64]>) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        if thresholds.is_some() {
            w.write_record(["node_id", "entropy", "confidence", "epsilon"])
        } else {
            w.write_record(["node_id", "entropy", "confidence"])
        }
        .map_err(csv_err)?;
        for i in 0..self.len() {
            let mut rec = vec![
                i.to_string(),
                format!("{:?}", self.entropy[i]),
                format!("{:?}", self.confidence[i]),
            ];
            if let Some(t) = thresholds {
                rec.push(format!("{:?}", t[i]));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Row entropy `−Σ_k p_k ln p_k` with `0 · ln 0 = 0`.
pub fn row_entropy(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum();
    h.max(0.0)
}

pub fn entropy(p: &ProbMatrix) -> UncertaintyVector {
    let m = p.as_matrix();
    let u = (0..m.rows()).map(|i| row_entropy(m.row(i))).collect();
    UncertaintyVector::from_uncertainty(u, UncertaintySource::Entropy).expect("entropy is finite and ≥ 0")
}

/// Exponential-free probabilities `p_i = (O_i + 1) / Σ_k (O_ik + 1)`.
/// Requires every `|O_ij| < 1`.
pub fn linearized_probs(logits: &DenseMatrix) -> Result<ProbMatrix> {
    if let Some(v) = logits.as_slice().iter().find(|v| !(v.abs() < 1.0)) {
        return Err(Error::Precondition(format!(
            "linearized probabilities need |logit| < 1, found {v}"
        )));
    }
    let mut p = logits.map(|v| v + 1.0);
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(ProbMatrix(p))
}

/// Anything that yields class logits for every node of a graph.
pub trait NodePredictor {
    /// Errors with [`Error::Untrained`] before the model has been fitted.
    fn predict_logits(&self, graph: &Graph) -> Result<DenseMatrix>;
}

/// Softmax entropy of a fitted model's predictions, frozen for re-training.
pub fn pretrain_uncertainty<P: NodePredictor + ?Sized>(model: &P, graph: &Graph) -> Result<UncertaintyVector> {
    let logits = model.predict_logits(graph)?;
    if !logits.is_finite() {
        return Err(Error::NonFinite("pretrained logits".into()));
    }
    Ok(entropy(&ProbMatrix::from_logits(&logits)))
}

fn unit_rows(z: &DenseMatrix, what: &str) -> Result<DenseMatrix> {
    let mut out = z.clone();
    for i in 0..z.rows() {
        let n = norm(z.row(i));
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput(format!(
                "{what} row {i} has zero norm; cosine similarity is undefined"
            )));
        }
        out.row_mut(i).iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

/// Symmetrized node-level contrastive loss between embeddings of the target
/// graph (`z`) and an augmented view (`z_aug`), with cosine similarity and
/// temperature `t`:
/// `u_i = ½ (l(z_i, z̃_i) + l(z̃_i, z_i))`, `l(a_i, b_i) = −ln(e^{sim(a_i,b_i)/t} / Σ_k e^{sim(a_i,b_k)/t})`.
pub fn contrastive_uncertainty(z: &DenseMatrix, z_aug: &DenseMatrix, t: f64) -> Result<UncertaintyVector> {
    if z.shape() != z_aug.shape() {
        return Err(Error::dims(
            "contrastive_uncertainty",
            format!("{:?}", z.shape()),
            format!("{:?}", z_aug.shape()),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidInput("temperature must be > 0".into()));
    }
    let a = unit_rows(z, "target embedding")?;
    let b = unit_rows(z_aug, "augmented embedding")?;
    contrastive_from_similarity(&a.matmul_nt(&b)?, t)
}

/// Contrastive uncertainty from a precomputed similarity matrix
/// `sim[i][k] = sim(z_i, z̃_k)`.
pub fn contrastive_from_similarity(sim: &DenseMatrix, t: f64) -> Result<UncertaintyVector> {
    if sim.rows() != sim.cols() {
        return Err(Error::dims("contrastive_from_similarity", "square", format!("{:?}", sim.shape())));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidInput("temperature must be > 0".into()));
    }
    let sim = sim.map(|v| v / t);
    let sim_t = sim.transpose();
    let n = sim.rows();
    let u = (0..n)
        .map(|i| {
            let pos = sim.get(i, i);
            let forward = log_sum_exp(sim.row(i)) - pos;
            let backward = log_sum_exp(sim_t.row(i)) - pos;
            (0.5 * (forward + backward)).max(0.0)
        })
        .collect();
    UncertaintyVector::from_uncertainty(u, UncertaintySource::Contrastive)
}

/// Augmented view for the contrastive proxy: each undirected edge is dropped
/// with probability `edge_drop`, each feature column zeroed with probability
/// `feature_mask`.
pub fn augment<R: Rng + ?Sized>(
    adj: &WeightedAdjacency,
    x: &DenseMatrix,
    edge_drop: f64,
    feature_mask: f64,
    rng: &mut R,
) -> Result<(WeightedAdjacency, DenseMatrix)> {
    let m = adj.matrix();
    let mut kept = Vec::with_capacity(m.nnz());
    for (i, j, w) in m.iter() {
        if i == j {
            kept.push((i, j, w));
        } else if i < j || m.position(j, i).is_none() {
            if rng.random::<f64>() >= edge_drop {
                kept.push((i, j, w));
                if let Some(p) = m.position(j, i) {
                    kept.push((j, i, m.values()[p]));
                }
            }
        }
    }
    let aug_adj = WeightedAdjacency::from_edges(adj.n(), kept)?;
    let mut aug_x = x.clone();
    for c in 0..x.cols() {
        if rng.random::<f64>() < feature_mask {
            for i in 0..x.rows() {
                aug_x.set(i, c, 0.0);
            }
        }
    }
    Ok((aug_adj, aug_x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn probs(rows: &[Vec<f64>]) -> ProbMatrix {
        ProbMatrix::new(DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn uniform_and_one_hot() {
        let u = entropy(&probs(&[vec![0.2; 5]]));
        assert!((u.entropy()[0] - 5f64.ln()).abs() < 1e-15);
        assert!((u.confidence()[0] - 0.2).abs() < 1e-15);
        let u = entropy(&probs(&[vec![0.0, 1.0, 0.0]]));
        assert_eq!(u.entropy()[0], 0.0);
        assert_eq!(u.confidence()[0], 1.0);
    }

    #[test]
    fn half_quarter_quarter() {
        let u = entropy(&probs(&[vec![0.5, 0.25, 0.25]]));
        // 1.5 ln 2 ≈ 1.0397207708399179
        assert!((u.entropy()[0] - 1.039_720_770_839_917_9).abs() < 1e-15);
    }

    #[test]
    fn rejects_unnormalized_rows() {
        assert!(ProbMatrix::new(DenseMatrix::from_rows(&[vec![0.5, 0.6]]).unwrap()).is_err());
        assert!(ProbMatrix::new(DenseMatrix::from_rows(&[vec![1.5, -0.5]]).unwrap()).is_err());
    }

    #[test]
    fn linearized_examples() {
        let p = linearized_probs(&DenseMatrix::zeros(1, 3)).unwrap();
        for &v in p.as_matrix().row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = linearized_probs(&DenseMatrix::from_rows(&[vec![0.5, -0.5, 0.0]]).unwrap()).unwrap();
        let want = [0.5, 1.0 / 6.0, 1.0 / 3.0];
        for (a, b) in p.as_matrix().row(0).iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = linearized_probs(&DenseMatrix::filled(2, 4, -0.7)).unwrap();
        assert!(p.as_matrix().as_slice().iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(linearized_probs(&DenseMatrix::filled(1, 2, 1.0)).is_err());
    }

    #[test]
    fn contrastive_two_orthogonal_nodes() {
        let z = DenseMatrix::identity(2);
        let u = contrastive_uncertainty(&z, &z, 1.0).unwrap();
        let e = std::f64::consts::E;
        let want = -(e / (e + 1.0)).ln();
        for &v in u.entropy() {
            assert!((v - want).abs() < 1e-15);
        }
        assert_eq!(u.source(), UncertaintySource::Contrastive);
    }

    #[test]
    fn contrastive_rejects_zero_rows() {
        let z = DenseMatrix::zeros(2, 2);
        assert!(contrastive_uncertainty(&z, &DenseMatrix::identity(2), 1.0).is_err());
    }

    #[test]
    fn contrastive_is_permutation_equivariant() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let z = DenseMatrix::random_normal(6, 3, 1.0, &mut rng);
        let za = DenseMatrix::random_normal(6, 3, 1.0, &mut rng);
        let perm = [3, 0, 5, 1, 4, 2];
        let pz = DenseMatrix::from_rows(&perm.iter().map(|&i| z.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let pza = DenseMatrix::from_rows(&perm.iter().map(|&i| za.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let u = contrastive_uncertainty(&z, &za, 0.5).unwrap();
        let pu = contrastive_uncertainty(&pz, &pza, 0.5).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!((pu.entropy()[k] - u.entropy()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn augment_keeps_pairs_together() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let adj = WeightedAdjacency::from_undirected(
            6,
            (0..6).flat_map(|i| ((i + 1)..6).map(move |j| (i, j, 1.0))),
        )
        .unwrap();
        let x = DenseMatrix::filled(6, 10, 1.0);
        let (a, ax) = augment(&adj, &x, 0.2, 0.2, &mut rng).unwrap();
        assert!(a.matrix().is_symmetric(0.0));
        assert!(a.nnz() <= adj.nnz());
        for c in 0..10 {
            let col: Vec<f64> = (0..6).map(|i| ax.get(i, c)).collect();
            assert!(col.iter().all(|&v| v == 0.0) || col.iter().all(|&v| v == 1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn entropy_bounded_by_ln_k(row in prop::collection::vec(0.0f64..1.0, 2..9)) {
            let s: f64 = row.iter().sum();
            prop_assume!(s > 1e-6);
            let p: Vec<f64> = row.iter().map(|v| v / s).collect();
            let k = p.len() as f64;
            let u = row_entropy(&p);
            prop_assert!(u <= k.ln() + 1e-12);
            prop_assert!(u >= 0.0);
            let uniform = vec![1.0 / k; p.len()];
            prop_assert!((row_entropy(&uniform) - k.ln()).abs() < 1e-12);
            let mut rev = p.clone();
            rev.reverse();
            prop_assert!((row_entropy(&rev) - u).abs() < 1e-12);
        }

        #[test]
        fn confidence_is_decreasing_in_entropy(a in 0.0f64..30.0, b in 0.0f64..30.0) {
            prop_assume!(a < b);
            let u = UncertaintyVector::from_uncertainty(vec![a, b], UncertaintySource::Entropy).unwrap();
            prop_assert!(u.confidence()[0] > u.confidence()[1]);
            prop_assert!(u.confidence()[0] <= 1.0);
            prop_assert!(((-a).exp() - u.confidence()[0]).abs() < 1e-12);
        }

        #[test]
        fn linearized_rows_are_distributions(vals in prop::collection::vec(-0.999f64..0.999, 1..20)) {
            let k = vals.len();
            let p = linearized_probs(&DenseMatrix::new(1, k, vals).unwrap()).unwrap();
            prop_assert!(ProbMatrix::new(p.as_matrix().clone()).is_ok());
        }

        #[test]
        fn contrastive_decreases_with_positive_similarity(
            sims in prop::collection::vec(-1.0f64..1.0, 25),
            node in 0usize..5,
            bump in 1e-3f64..1.0,
        ) {
            let sim = DenseMatrix::new(5, 5, sims).unwrap();
            let mut raised = sim.clone();
            raised.set(node, node, sim.get(node, node) + bump);
            let u0 = contrastive_from_similarity(&sim, 0.5).unwrap();
            let u1 = contrastive_from_similarity(&raised, 0.5).unwrap();
            prop_assert!(u1.entropy()[node] < u0.entropy()[node]);
        }
    }
}
