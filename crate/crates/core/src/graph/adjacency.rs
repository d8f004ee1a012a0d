use serde::{Deserialize, Serialize};

use super::sparse::{SparseMatrix, SupportId};
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Square, nonnegative sparse matrix. Entry `(i, j)` is the weight with
/// which node `j` feeds node `i`'s aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency {
    matrix: SparseMatrix,
    symmetric_hint: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// `D^(−1/2) (A + I) D^(−1/2)`
    Symmetric,
    /// `D^(−1) (A + I)`
    Row,
}

impl WeightedAdjacency {
    pub fn new(matrix: SparseMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dims(
                "WeightedAdjacency",
                "square matrix",
                format!("{}×{}", matrix.n_rows(), matrix.n_cols()),
            ));
        }
        if let Some((i, j, w)) = matrix.iter().find(|&(_, _, w)| w < 0.0) {
            return Err(Error::InvalidInput(format!(
                "negative weight {w} at ({i}, {j})"
            )));
        }
        Ok(Self {
            matrix,
            symmetric_hint: false,
        })
    }

    /// Like [`WeightedAdjacency::new`] but also verifies and records symmetry.
    pub fn new_symmetric(matrix: SparseMatrix) -> Result<Self> {
        let mut adj = Self::new(matrix)?;
        if !adj.matrix.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::InvalidInput("matrix is not symmetric".into()));
        }
        adj.symmetric_hint = true;
        Ok(adj)
    }

    /// Sets the symmetric hint if the stored matrix actually is symmetric.
    pub fn detect_symmetry(mut self) -> Self {
        self.symmetric_hint = self.matrix.is_symmetric(SYMMETRY_TOL);
        self
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: SparseMatrix::identity(n),
            symmetric_hint: true,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self {
            matrix: SparseMatrix::zeros(n, n),
            symmetric_hint: true,
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        Ok(Self::new(SparseMatrix::from_triplets(n, n, edges)?)?.detect_symmetry())
    }

    /// Undirected edge list: every `(i, j, w)` also stores `(j, i, w)`.
    pub fn from_undirected(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut t = Vec::new();
        for (i, j, w) in edges {
            t.push((i, j, w));
            if i != j {
                t.push((j, i, w));
            }
        }
        Self::from_edges(n, t)
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SparseMatrix {
        self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn symmetric_hint(&self) -> bool {
        self.symmetric_hint
    }

    pub fn support_id(&self) -> SupportId {
        self.matrix.support_id()
    }

    /// Same support with new (nonnegative) values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.matrix.with_values(values)?).map(Self::detect_symmetry)
    }

    /// Number of unordered node pairs `{i, j}`, `i ≠ j`, with at least one stored direction.
    pub fn undirected_edge_count(&self) -> usize {
        self.matrix
            .iter()
            .filter(|&(i, j, _)| i != j && (i < j || self.matrix.position(j, i).is_none()))
            .count()
    }

    /// Pairs `(i, j)`, `i < j`, whose two directions differ by more than `tol`.
    pub fn asymmetric_pairs(&self, tol: f64) -> usize {
        let m = &self.matrix;
        m.iter()
            .filter(|&(i, j, w)| {
                i != j && {
                    let back = m.get(j, i);
                    (i < j || m.position(j, i).is_none()) && (w - back).abs() > tol
                }
            })
            .count()
    }
}

/// Bookkeeping from [`normalize_traced`] needed to push gradients from the
/// normalized operator back onto the source entries.
#[derive(Debug, Clone)]
pub struct Normalization {
    mode: NormMode,
    degrees: Vec<f64>,
    src_indptr: Vec<usize>,
    src_to_out: Vec<usize>,
    src_support: SupportId,
    out_support: SupportId,
}

pub fn normalize(adj: &WeightedAdjacency, mode: NormMode, add_self_loops: bool) -> Result<WeightedAdjacency> {
    normalize_traced(adj, mode, add_self_loops).map(|(a, _)| a)
}

/// Normalize `A` (or `A + I` when `add_self_loops`) by its row degrees.
/// `D_ii = [add_self_loops] + Σ_j A_ij`.
pub fn normalize_traced(
    adj: &WeightedAdjacency,
    mode: NormMode,
    add_self_loops: bool,
) -> Result<(WeightedAdjacency, Normalization)> {
    let a = adj.matrix();
    let n = a.n_rows();
    let loop_w = if add_self_loops { 1.0 } else { 0.0 };
    let mut degrees = Vec::with_capacity(n);
    for i in 0..n {
        let d = loop_w + a.row(i).1.iter().sum::<f64>();
        if d <= 0.0 {
            return Err(Error::ZeroDegree { row: i });
        }
        degrees.push(d);
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();

    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(a.nnz() + n);
    let mut values = Vec::with_capacity(a.nnz() + n);
    let mut src_to_out = Vec::with_capacity(a.nnz());
    indptr.push(0);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let mut diag_done = !add_self_loops;
        let scale = |j: usize, w: f64| match mode {
            NormMode::Row => w / degrees[i],
            NormMode::Symmetric => w * inv_sqrt[i] * inv_sqrt[j],
        };
        for (&j, &w) in cols.iter().zip(vals) {
            if !diag_done && j > i {
                indices.push(i);
                values.push(scale(i, loop_w));
                diag_done = true;
            }
            let w = if j == i && !diag_done {
                diag_done = true;
                w + loop_w
            } else {
                w
            };
            src_to_out.push(indices.len());
            indices.push(j);
            values.push(scale(j, w));
        }
        if !diag_done {
            indices.push(i);
            values.push(scale(i, loop_w));
        }
        indptr.push(indices.len());
    }
    let matrix = SparseMatrix::from_csr(n, n, indptr, indices, values)?;
    let out = WeightedAdjacency::new(matrix)?;
    let out = if adj.symmetric_hint() && mode == NormMode::Symmetric {
        out.detect_symmetry()
    } else {
        out
    };
    let trace = Normalization {
        mode,
        degrees,
        src_indptr: a.indptr().to_vec(),
        src_to_out,
        src_support: adj.support_id(),
        out_support: out.support_id(),
    };
    Ok((out, trace))
}

impl Normalization {
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Gradient with respect to the stored source entries, given the gradient
    /// `d_out` over the stored entries of the normalized operator `out`.
    pub fn backward(&self, out: &WeightedAdjacency, d_out: &[f64]) -> Result<Vec<f64>> {
        if out.support_id() != self.out_support || d_out.len() != out.nnz() {
            return Err(Error::ProvenanceMismatch(
                "gradient is not over this normalization's output".into(),
            ));
        }
        let p = out.matrix();
        let n = p.n_rows();
        // s_i = Σ_j dP_ij P_ij (+ the column sum for symmetric mode)
        let mut s = vec![0.0; n];
        for i in 0..n {
            for e in p.row_range(i) {
                s[i] += d_out[e] * p.values()[e];
            }
        }
        if self.mode == NormMode::Symmetric {
            let mut col = vec![0.0; n];
            for (e, (_, j, w)) in p.iter().enumerate() {
                col[j] += d_out[e] * w;
            }
            for i in 0..n {
                s[i] += col[i];
            }
        }
        let d_deg: Vec<f64> = match self.mode {
            NormMode::Row => (0..n).map(|i| -s[i] / self.degrees[i]).collect(),
            NormMode::Symmetric => (0..n).map(|i| -0.5 * s[i] / self.degrees[i]).collect(),
        };
        let mut grad = Vec::with_capacity(self.src_to_out.len());
        for i in 0..n {
            for e in self.src_indptr[i]..self.src_indptr[i + 1] {
                let o = self.src_to_out[e];
                let j = p.indices()[o];
                let direct = match self.mode {
                    NormMode::Row => d_out[o] / self.degrees[i],
                    NormMode::Symmetric => {
                        d_out[o] / (self.degrees[i].sqrt() * self.degrees[j].sqrt())
                    }
                };
                grad.push(direct + d_deg[i]);
            }
        }
        Ok(grad)
    }

    pub fn source_support(&self) -> SupportId {
        self.src_support
    }
}

/// Records where each source entry ended up in a structural transform so the
/// transform can be differentiated.
#[derive(Debug, Clone)]
pub struct SymmetrizeTrace {
    /// For each output entry, source positions of `(i, j)` and `(j, i)`.
    sources: Vec<(Option<usize>, Option<usize>)>,
    src_len: usize,
}

pub fn symmetrize(adj: &WeightedAdjacency) -> WeightedAdjacency {
    symmetrize_traced(adj).0
}

/// `(A + Aᵀ) / 2` over the union of supports.
pub fn symmetrize_traced(adj: &WeightedAdjacency) -> (WeightedAdjacency, SymmetrizeTrace) {
    let a = adj.matrix();
    let t = a.transpose();
    let n = a.n_rows();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut sources = Vec::new();
    indptr.push(0);
    for i in 0..n {
        let (ac, av) = a.row(i);
        let (tc, tv) = t.row(i);
        let (mut p, mut q) = (0, 0);
        let a_base = a.row_range(i).start;
        while p < ac.len() || q < tc.len() {
            let ca = ac.get(p).copied().unwrap_or(usize::MAX);
            let ct = tc.get(q).copied().unwrap_or(usize::MAX);
            let j = ca.min(ct);
            let mut w = 0.0;
            let mut here = None;
            let mut there = None;
            if ca == j {
                w += av[p];
                here = Some(a_base + p);
                p += 1;
            }
            if ct == j {
                w += tv[q];
                there = a.position(j, i);
                q += 1;
            }
            indices.push(j);
            values.push(0.5 * w);
            sources.push((here, there));
        }
        indptr.push(indices.len());
    }
    let m = SparseMatrix::from_csr(n, n, indptr, indices, values).expect("merged rows stay sorted");
    let out = WeightedAdjacency {
        matrix: m,
        symmetric_hint: true,
    };
    (
        out,
        SymmetrizeTrace {
            sources,
            src_len: a.nnz(),
        },
    )
}

impl SymmetrizeTrace {
    pub fn backward(&self, d_out: &[f64]) -> Result<Vec<f64>> {
        if d_out.len() != self.sources.len() {
            return Err(Error::ProvenanceMismatch(
                "gradient is not over this symmetrized matrix".into(),
            ));
        }
        let mut grad = vec![0.0; self.src_len];
        for (&(here, there), &g) in self.sources.iter().zip(d_out) {
            if let Some(p) = here {
                grad[p] += 0.5 * g;
            }
            if let Some(p) = there {
                grad[p] += 0.5 * g;
            }
        }
        Ok(grad)
    }
}

/// Positions of each operand's entries inside the result of [`combine`].
#[derive(Debug, Clone)]
pub struct CombineTrace {
    pub a_to_out: Vec<usize>,
    pub b_to_out: Vec<usize>,
    pub a_weight: f64,
    pub b_weight: f64,
    a_len: usize,
    b_len: usize,
}

/// `wa·A + wb·B` over the union of supports. An operand with weight exactly
/// zero contributes no entries at all, so `combine(A, 0, B, 1)` equals `B`.
pub fn combine(
    a: &WeightedAdjacency,
    wa: f64,
    b: &WeightedAdjacency,
    wb: f64,
) -> Result<(WeightedAdjacency, CombineTrace)> {
    if a.n() != b.n() {
        return Err(Error::dims("combine", a.n(), b.n()));
    }
    let n = a.n();
    let (am, bm) = (a.matrix(), b.matrix());
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut a_to_out = Vec::with_capacity(am.nnz());
    let mut b_to_out = Vec::with_capacity(bm.nnz());
    indptr.push(0);
    let use_a = wa != 0.0;
    let use_b = wb != 0.0;
    for i in 0..n {
        let (ac, av) = am.row(i);
        let (bc, bv) = bm.row(i);
        let (mut p, mut q) = (0, 0);
        while p < ac.len() || q < bc.len() {
            let ca = if use_a { ac.get(p).copied().unwrap_or(usize::MAX) } else { usize::MAX };
            let cb = if use_b { bc.get(q).copied().unwrap_or(usize::MAX) } else { usize::MAX };
            if ca == usize::MAX && cb == usize::MAX {
                break;
            }
            let j = ca.min(cb);
            let mut w = 0.0;
            let at = indices.len();
            if ca == j {
                w += wa * av[p];
                a_to_out.push(at);
                p += 1;
            }
            if cb == j {
                w += wb * bv[q];
                b_to_out.push(at);
                q += 1;
            }
            indices.push(j);
            values.push(w);
        }
        if !use_a {
            p = ac.len();
        }
        if !use_b {
            q = bc.len();
        }
        debug_assert!(p == ac.len() && q == bc.len());
        indptr.push(indices.len());
    }
    let m = SparseMatrix::from_csr(n, n, indptr, indices, values)?;
    let out = WeightedAdjacency::new(m)?;
    let out = if a.symmetric_hint() && b.symmetric_hint() {
        out.detect_symmetry()
    } else {
        out
    };
    Ok((
        out,
        CombineTrace {
            a_to_out,
            b_to_out,
            a_weight: wa,
            b_weight: wb,
            a_len: am.nnz(),
            b_len: bm.nnz(),
        },
    ))
}

impl CombineTrace {
    /// Gradient with respect to the entries of the first operand (zeros when
    /// its weight was zero).
    pub fn backward_a(&self, d_out: &[f64]) -> Vec<f64> {
        Self::pull(&self.a_to_out, self.a_weight, self.a_len, d_out)
    }

    pub fn backward_b(&self, d_out: &[f64]) -> Vec<f64> {
        Self::pull(&self.b_to_out, self.b_weight, self.b_len, d_out)
    }

    fn pull(map: &[usize], w: f64, len: usize, d_out: &[f64]) -> Vec<f64> {
        if w == 0.0 {
            return vec![0.0; len];
        }
        map.iter().map(|&o| w * d_out[o]).collect()
    }
}
