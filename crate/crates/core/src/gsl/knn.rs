use crate::error::{Error, Result};
use crate::graph::{SparseMatrix, WeightedAdjacency};
use crate::numerics::{norm, sigmoid, DenseMatrix};

use super::config::Similarity;

const NORM_FLOOR: f64 = 1e-12;

/// How raw pairwise scores become edge weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreTransform {
    Sigmoid,
    /// `max(score, 0)`
    Clamp,
}

impl ScoreTransform {
    fn apply(self, s: f64) -> (f64, f64) {
        match self {
            ScoreTransform::Sigmoid => {
                let v = sigmoid(s);
                (v, v * (1.0 - v))
            }
            ScoreTransform::Clamp if s > 0.0 => (s, 1.0),
            ScoreTransform::Clamp => (0.0, 0.0),
        }
    }
}

/// All-pairs scores `φ(E_i, E_j)`.
pub fn pairwise_scores(e: &DenseMatrix, sim: Similarity) -> Result<DenseMatrix> {
    match sim {
        Similarity::InnerProduct => e.matmul_nt(e),
        Similarity::Cosine => {
            let (u, _) = unit_rows(e);
            u.matmul_nt(&u)
        }
    }
}

fn unit_rows(e: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let mut u = e.clone();
    let mut norms = Vec::with_capacity(e.rows());
    for i in 0..e.rows() {
        let r = norm(e.row(i)).max(NORM_FLOOR);
        norms.push(r);
        for v in u.row_mut(i) {
            *v /= r;
        }
    }
    (u, norms)
}

/// Keep the `k` largest positive weights of each row, excluding the diagonal.
/// Ties go to the smaller column index. Rows with fewer than `k` positive
/// candidates keep all of them.
pub fn select_top_k(weights: &DenseMatrix, k: usize) -> Result<SparseMatrix> {
    let n = weights.rows();
    if weights.cols() != n {
        return Err(Error::dims("select_top_k", n, weights.cols()));
    }
    if k >= n {
        return Err(Error::InvalidInput(format!("k = {k} must be smaller than n = {n}")));
    }
    if !weights.is_finite() {
        return Err(Error::NonFinite("similarity scores".into()));
    }
    let mut triplets = Vec::with_capacity(n * k);
    let mut cand: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let row = weights.row(i);
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i && row[j] > 0.0));
        let order = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
        if cand.len() > k {
            cand.select_nth_unstable_by(k - 1, order);
            cand.truncate(k);
        }
        cand.sort_unstable();
        triplets.extend(cand.iter().map(|&j| (i, j, row[j])));
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Forward record of the kNN graph built from embeddings.
#[derive(Debug, Clone)]
pub struct KnnTrace {
    sim: Similarity,
    /// Unit rows and the norms they were divided by (cosine only).
    unit: Option<(DenseMatrix, Vec<f64>)>,
    /// d weight / d score, per stored entry.
    slopes: Vec<f64>,
}

/// Directed kNN graph over embedding rows, with weights `transform(φ)`.
pub fn knn_graph(
    e: &DenseMatrix,
    k: usize,
    sim: Similarity,
    transform: ScoreTransform,
) -> Result<(WeightedAdjacency, KnnTrace)> {
    let unit = match sim {
        Similarity::Cosine => Some(unit_rows(e)),
        Similarity::InnerProduct => None,
    };
    let scores = match &unit {
        Some((u, _)) => u.matmul_nt(u)?,
        None => e.matmul_nt(e)?,
    };
    let weights = scores.map(|s| transform.apply(s).0);
    let knn = select_top_k(&weights, k)?;
    let slopes = knn
        .iter()
        .map(|(i, j, _)| transform.apply(scores.get(i, j)).1)
        .collect();
    Ok((WeightedAdjacency::new(knn)?, KnnTrace { sim, unit, slopes }))
}

impl KnnTrace {
    /// Gradient with respect to the embeddings, given `d_knn` over the stored
    /// entries of the kNN graph.
    pub fn backward(&self, knn: &WeightedAdjacency, e: &DenseMatrix, d_knn: &[f64]) -> Result<DenseMatrix> {
        if d_knn.len() != knn.nnz() || self.slopes.len() != knn.nnz() {
            return Err(Error::ProvenanceMismatch("gradient is not over this kNN graph".into()));
        }
        let base = match &self.unit {
            Some((u, _)) => u,
            None => e,
        };
        let h = e.cols();
        let mut d_base = DenseMatrix::zeros(e.rows(), h);
        for (idx, (i, j, _)) in knn.matrix().iter().enumerate() {
            let g = d_knn[idx] * self.slopes[idx];
            if g == 0.0 {
                continue;
            }
            for c in 0..h {
                let (bi, bj) = (base.get(i, c), base.get(j, c));
                d_base.row_mut(i)[c] += g * bj;
                d_base.row_mut(j)[c] += g * bi;
            }
        }
        match (&self.unit, self.sim) {
            (Some((u, norms)), Similarity::Cosine) => {
                // u = e / r: de = (du − u (u·du)) / r, or du / floor when clamped
                let mut d_e = d_base;
                for i in 0..e.rows() {
                    let r = norms[i];
                    let ui = u.row(i);
                    let proj = if r > NORM_FLOOR {
                        ui.iter().zip(d_e.row(i)).map(|(a, b)| a * b).sum()
                    } else {
                        0.0
                    };
                    for (g, &uc) in d_e.row_mut(i).iter_mut().zip(ui) {
                        *g = (*g - uc * proj) / r;
                    }
                }
                Ok(d_e)
            }
            _ => Ok(d_base),
        }
    }
}
