use crate::error::{Error, Result};
use crate::graph::WeightedAdjacency;
use crate::numerics::DenseMatrix;

use super::config::Regularizer;

/// Value of a structure penalty and its gradient over the stored entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Sum of the selected penalties on `s`:
/// `l1 = Σ |S_ij|`, `smoothness = ½ Σ S_ij ‖x_i − x_j‖²`.
pub fn regularize(s: &WeightedAdjacency, x: &DenseMatrix, which: &[Regularizer]) -> Result<Penalty> {
    if x.rows() != s.n() {
        return Err(Error::dims("regularize", s.n(), x.rows()));
    }
    let m = s.matrix();
    let mut value = 0.0;
    let mut grad = vec![0.0; m.nnz()];
    let l1 = which.contains(&Regularizer::L1Sparsity);
    let smooth = which.contains(&Regularizer::Smoothness);
    for (e, (i, j, w)) in m.iter().enumerate() {
        if l1 {
            value += w.abs();
            grad[e] += if w < 0.0 { -1.0 } else { 1.0 };
        }
        if smooth && i != j {
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            value += 0.5 * w * d2;
            grad[e] += 0.5 * d2;
        }
    }
    Ok(Penalty { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn zero_structure_has_zero_penalty() {
        let s = WeightedAdjacency::empty(4);
        let x = DenseMatrix::filled(4, 2, 1.5);
        let p = regularize(&s, &x, &[Regularizer::L1Sparsity, Regularizer::Smoothness]).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn constant_features_are_smooth() {
        let s = WeightedAdjacency::from_undirected(3, vec![(0, 1, 0.4), (1, 2, 2.0)]).unwrap();
        let x = DenseMatrix::filled(3, 5, -0.7);
        let p = regularize(&s, &x, &[Regularizer::Smoothness]).unwrap();
        assert_eq!(p.value, 0.0);
        let p = regularize(&s, &x, &[Regularizer::L1Sparsity]).unwrap();
        assert!((p.value - 4.8).abs() < 1e-15);
    }

    #[test]
    fn smoothness_matches_laplacian_trace() {
        let mut rng = seed::stream(11, "reg-test");
        let n = 5;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < 0.6 {
                    edges.push((i, j, rng.random::<f64>()));
                }
            }
        }
        let s = WeightedAdjacency::from_edges(n, edges).unwrap();
        let x = DenseMatrix::random_normal(n, 3, 1.0, &mut rng);
        // tr(Xᵀ L X) with L built from the symmetrized weights (S + Sᵀ)/2
        let d = s.matrix().to_dense();
        let mut trace = 0.0;
        for c in 0..3 {
            for i in 0..n {
                for j in 0..n {
                    let w = 0.5 * (d.get(i, j) + d.get(j, i));
                    let deg: f64 = (0..n).map(|k| 0.5 * (d.get(i, k) + d.get(k, i))).sum();
                    let l = if i == j { deg - w } else { -w };
                    trace += x.get(i, c) * l * x.get(j, c);
                }
            }
        }
        let p = regularize(&s, &x, &[Regularizer::Smoothness]).unwrap();
        assert!((p.value - trace).abs() < 1e-10, "{} vs {}", p.value, trace);
    }
}
