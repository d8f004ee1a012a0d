use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, softmax_into, DenseMatrix};

/// Mean negative log-softmax probability of the true class over `idx`, and
/// its gradient with respect to every logit (zero outside `idx`).
pub fn cross_entropy(
    logits: &DenseMatrix,
    labels: &[Option<usize>],
    idx: &[usize],
) -> Result<(f64, DenseMatrix)> {
    if idx.is_empty() {
        return Err(Error::Precondition("cross-entropy mask is empty".into()));
    }
    if labels.len() != logits.rows() {
        return Err(Error::dims("cross_entropy", logits.rows(), labels.len()));
    }
    let k = logits.cols();
    let scale = 1.0 / idx.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), k);
    let mut loss = 0.0;
    for &i in idx {
        let y = labels[i].ok_or_else(|| Error::InvalidInput(format!("node {i} has no label")))?;
        if y >= k {
            return Err(Error::InvalidInput(format!("label {y} of node {i} ≥ {k} classes")));
        }
        let row = logits.row(i);
        loss += log_sum_exp(row) - row[y];
        let g = grad.row_mut(i);
        softmax_into(row, g);
        g[y] -= 1.0;
        g.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((loss * scale, grad))
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Fraction of `idx` whose arg-max logit equals the label. Unlabeled nodes count as wrong.
pub fn accuracy(logits: &DenseMatrix, labels: &[Option<usize>], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let hits = idx
        .iter()
        .filter(|&&i| labels[i] == Some(argmax(logits.row(i))))
        .count();
    hits as f64 / idx.len() as f64
}
