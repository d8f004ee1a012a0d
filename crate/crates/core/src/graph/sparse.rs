use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix};

/// Fingerprint of a sparsity pattern (shape plus stored coordinates).
///
/// Gradients over stored entries carry the id of the pattern they were
/// computed against so they cannot be applied to a different matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SupportId(u64);

/// Compressed sparse row matrix with columns sorted ascending inside each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from `(row, col, weight)` triplets. Duplicates are summed and
    /// entries whose merged weight is exactly zero are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, w) in &t {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidInput(format!(
                    "entry ({r}, {c}) outside a {n_rows}×{n_cols} matrix"
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("weight of entry ({r}, {c})")));
            }
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        for (r, c, w) in t {
            if let (Some(&lr), Some(&lc)) = (rows.last(), indices.last()) {
                if lr == r && lc == c {
                    *values.last_mut().unwrap() += w;
                    continue;
                }
            }
            rows.push(r);
            indices.push(c);
            values.push(w);
        }
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_val = Vec::with_capacity(values.len());
        for ((r, c), w) in rows.into_iter().zip(indices).zip(values) {
            if w != 0.0 {
                indptr[r + 1] += 1;
                keep_idx.push(c);
                keep_val.push(w);
            }
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices: keep_idx,
            values: keep_val,
        })
    }

    /// Assemble from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != n_rows + 1 || indptr[0] != 0 || *indptr.last().unwrap() != indices.len()
        {
            return Err(Error::InvalidInput("malformed row pointer array".into()));
        }
        if indices.len() != values.len() {
            return Err(Error::dims("from_csr", indices.len(), values.len()));
        }
        for i in 0..n_rows {
            if indptr[i] > indptr[i + 1] {
                return Err(Error::InvalidInput("row pointers must be nondecreasing".into()));
            }
            let cols = &indices[indptr[i]..indptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!(
                    "columns of row {i} are not strictly increasing"
                )));
            }
            if cols.last().is_some_and(|&c| c >= n_cols) {
                return Err(Error::InvalidInput(format!("column out of range in row {i}")));
            }
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("stored value {p}")));
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut indptr = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n_rows: m.rows(),
            n_cols: m.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, w) in self.iter() {
            m.set(i, j, w);
        }
        m
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored-entry range of row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.indptr[i]..self.indptr[i + 1]
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_range(i);
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn row_degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.indices[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|p| r.start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// `(row, col, weight)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            self.row_range(i)
                .map(move |p| (i, self.indices[p], self.values[p]))
        })
    }

    /// Row index of every stored entry.
    pub fn entry_rows(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            rows.extend(std::iter::repeat_n(i, self.row_degree(i)));
        }
        rows
    }

    /// Same support, new values. Stored zeros are kept so positions line up
    /// with `self`.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::dims("with_values", self.nnz(), values.len()));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("stored value {p}")));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Drop stored entries that are exactly zero.
    pub fn pruned(&self) -> Self {
        Self::from_triplets(self.n_rows, self.n_cols, self.iter()).expect("valid source")
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (i, j, w) in self.iter() {
            let p = next[j];
            indices[p] = i;
            values[p] = w;
            next[j] += 1;
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    pub fn support_id(&self) -> SupportId {
        let mut h = DefaultHasher::new();
        self.n_rows.hash(&mut h);
        self.n_cols.hash(&mut h);
        self.indptr.hash(&mut h);
        self.indices.hash(&mut h);
        SupportId(h.finish())
    }

    /// True when every stored coordinate of `self` is also stored in `other`.
    pub fn support_subset_of(&self, other: &SparseMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.iter().all(|(i, j, _)| other.position(i, j).is_some())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && self.iter().all(|(i, j, w)| match self.position(j, i) {
                Some(p) => (self.values[p] - w).abs() <= tol,
                None => false,
            })
    }

    pub fn count_off_diagonal(&self) -> usize {
        self.iter().filter(|&(i, j, _)| i != j).count()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// Sparse × dense product. Each output row accumulates in ascending
    /// column order, so results are bit-reproducible.
    pub fn spmm(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != dense.rows() {
            return Err(Error::dims(
                "spmm",
                format!("{} dense rows", self.n_cols),
                dense.rows(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.n_rows, dense.cols());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let dst = out.row_mut(i);
            for (&j, &w) in cols.iter().zip(vals) {
                for (d, &x) in dst.iter_mut().zip(dense.row(j)) {
                    *d += w * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, scattering rows in ascending order.
    pub fn spmm_t(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != dense.rows() {
            return Err(Error::dims(
                "spmm_t",
                format!("{} dense rows", self.n_rows),
                dense.rows(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.n_cols, dense.cols());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let src = dense.row(i);
            for (&j, &w) in cols.iter().zip(vals) {
                for (d, &x) in out.row_mut(j).iter_mut().zip(src) {
                    *d += w * x;
                }
            }
        }
        Ok(out)
    }

    /// For each stored `(i, j)`, the inner product `⟨left_i, right_j⟩`.
    /// This is the gradient of `⟨G, A·R⟩` with respect to the stored entries of `A`.
    pub fn sampled_dot(&self, left: &DenseMatrix, right: &DenseMatrix) -> Result<Vec<f64>> {
        if left.rows() != self.n_rows || right.rows() != self.n_cols || left.cols() != right.cols()
        {
            return Err(Error::dims(
                "sampled_dot",
                format!("{}×k and {}×k", self.n_rows, self.n_cols),
                format!("{:?} and {:?}", left.shape(), right.shape()),
            ));
        }
        Ok(self
            .iter()
            .map(|(i, j, _)| dot(left.row(i), right.row(j)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_duplicates_and_sort() {
        let m = SparseMatrix::from_triplets(
            2,
            3,
            vec![(1, 2, 1.0), (0, 1, 2.0), (1, 0, 0.5), (0, 1, 3.0), (1, 1, 0.0)],
        )
        .unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 5.0);
        assert_eq!(m.row(1).0, &[0, 2]);
        assert_eq!(m.get(1, 1), 0.0);
        assert!(SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, vec![(0, 0, f64::NAN)]).is_err());
    }

    #[test]
    fn csr_validation() {
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 2], vec![1, 2], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn spmm_identity_and_zero() {
        let m = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![3.5, 0.25], vec![0.0, 9.0]]).unwrap();
        assert_eq!(SparseMatrix::identity(3).spmm(&m).unwrap(), m);
        assert_eq!(
            SparseMatrix::zeros(3, 3).spmm(&m).unwrap(),
            DenseMatrix::zeros(3, 2)
        );
        assert!(SparseMatrix::identity(2).spmm(&m).is_err());
    }

    #[test]
    fn transpose_and_spmm_t() {
        let a = SparseMatrix::from_triplets(2, 3, vec![(0, 2, 1.5), (1, 0, -1.0), (1, 2, 2.0)])
            .unwrap();
        let t = a.transpose();
        assert_eq!(t.to_dense(), a.to_dense().transpose());
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.spmm_t(&x).unwrap(), t.spmm(&x).unwrap());
    }

    #[test]
    fn support_ids() {
        let a = SparseMatrix::identity(3);
        let b = a.with_values(vec![2.0, 3.0, 4.0]).unwrap();
        assert_eq!(a.support_id(), b.support_id());
        assert_ne!(a.support_id(), SparseMatrix::zeros(3, 3).support_id());
        assert!(SparseMatrix::zeros(3, 3).support_subset_of(&a));
    }
}
