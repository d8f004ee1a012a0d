//! Numerical checks of the entropy lower bound for mean aggregation of
//! linearized logits, the log-sum inequality behind it, and the correlation
//! between a node's entropy and its neighbors'.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gnn::{train_sgc, SgcModel, TrainConfig, TrainReport};
use crate::graph::{normalize, Graph, NormMode, WeightedAdjacency};
use crate::numerics::DenseMatrix;
use crate::seed;
use crate::uncertainty::{entropy, linearized_probs, ProbMatrix};

/// Convex weights of one node's neighbors in the entropy bound.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaCoefficients {
    pub neighbors: Vec<usize>,
    pub eta: Vec<f64>,
}

/// `η_j = Â_ij Σ_k (O'_jk + 1) / Σ_j' Â_ij' Σ_k (O'_j'k + 1)` over the stored
/// entries of row `i` of a row-normalized operator (self-loop included).
pub fn compute_eta(op: &WeightedAdjacency, i: usize, logits: &DenseMatrix) -> Result<EtaCoefficients> {
    if op.n() != logits.rows() {
        return Err(Error::dims("compute_eta", op.n(), logits.rows()));
    }
    let (cols, w) = op.matrix().row(i);
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("row {i} sums to {total}, not 1")));
    }
    let mut mass = Vec::with_capacity(cols.len());
    for (&j, &a) in cols.iter().zip(w) {
        let row = logits.row(j);
        if row.iter().any(|v| !(v.abs() < 1.0)) {
            return Err(Error::Precondition(format!("logits of node {j} are not bounded by 1")));
        }
        mass.push(a * row.iter().map(|v| v + 1.0).sum::<f64>());
    }
    let z: f64 = mass.iter().sum();
    Ok(EtaCoefficients {
        neighbors: cols.to_vec(),
        eta: mass.into_iter().map(|m| m / z).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    /// Entropy after aggregation.
    pub u: Vec<f64>,
    /// `Σ_j η_j u'_j`
    pub bound: Vec<f64>,
    pub slack: Vec<f64>,
    /// Extremes of `η_j` over nodes with at least one neighbor besides
    /// themselves, and of every row sum of `η`.
    pub eta_range: (f64, f64),
    pub eta_sum_range: (f64, f64),
    /// Nodes whose only aggregation term is their self-loop (`η = (1)`).
    pub self_only: usize,
}

impl Prop1Report {
    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["node", "u_i", "bound", "slack"]).map_err(|e| csv_error(path, e))?;
        for i in 0..self.u.len() {
            w.write_record([
                i.to_string(),
                self.u[i].to_string(),
                self.bound[i].to_string(),
                self.slack[i].to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Check the bound on `(A, X, W)`: logits `XW` are scaled into the open unit
/// ball, aggregated with `D^{-1}(A + I)`, and the entropy of every aggregated
/// node compared against the η-weighted entropies of its neighbors.
pub fn check_prop1(adj: &WeightedAdjacency, x: &DenseMatrix, w: &DenseMatrix) -> Result<Prop1Report> {
    let mut logits = x.matmul(w)?;
    let scale = 0.99 / (logits.max_abs() + 1e-6);
    logits.scale(scale);
    if logits.max_abs() >= 1.0 {
        return Err(Error::Precondition("logits not bounded by 1 after rescaling".into()));
    }
    let op = normalize(adj, NormMode::Row, true)?;
    let aggregated = op.matrix().spmm(&logits)?;
    let u = entropy(&linearized_probs(&aggregated)?).entropy().to_vec();
    let u0 = entropy(&linearized_probs(&logits)?).entropy().to_vec();
    let n = adj.n();
    let mut bound = Vec::with_capacity(n);
    let mut eta_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut eta_sum_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut self_only = 0;
    for i in 0..n {
        let eta = compute_eta(&op, i, &logits)?;
        let sum: f64 = eta.eta.iter().sum();
        eta_sum_range = (eta_sum_range.0.min(sum), eta_sum_range.1.max(sum));
        if eta.eta.len() == 1 {
            self_only += 1;
        } else {
            for &e in &eta.eta {
                eta_range = (eta_range.0.min(e), eta_range.1.max(e));
            }
        }
        bound.push(eta.neighbors.iter().zip(&eta.eta).map(|(&j, e)| e * u0[j]).sum());
    }
    let slack = u.iter().zip(&bound).map(|(a, b)| a - b).collect();
    Ok(Prop1Report {
        u,
        bound,
        slack,
        eta_range,
        eta_sum_range,
        self_only,
    })
}

/// A random instance for [`check_prop1`]: `n ≤ max_n` nodes with random
/// positive edge weights, `K ≤ max_k` classes.
pub fn random_prop1_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_n: usize,
    max_k: usize,
) -> (WeightedAdjacency, DenseMatrix, DenseMatrix) {
    let n = rng.random_range(1..=max_n);
    let k = rng.random_range(2..=max_k.max(2));
    let d = rng.random_range(1..=16);
    let p = rng.random_range(0.0..0.5);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j, rng.random_range(0.1..2.0)));
            }
        }
    }
    let adj = WeightedAdjacency::from_undirected(n, edges).expect("valid random edges");
    let x = DenseMatrix::random_normal(n, d, 1.0, rng);
    let w = DenseMatrix::random_normal(d, k, rng.random_range(0.1..3.0), rng);
    (adj, x, w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSumCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `Σ a_i ln(a_i / b_i) ≥ (Σ a) ln(Σ a / Σ b)`, with `0 ln(0/b) = 0`.
pub fn log_sum_oracle(a: &[f64], b: &[f64]) -> Result<LogSumCheck> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::dims("log_sum_oracle", a.len(), b.len()));
    }
    if a.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("a must be nonnegative and finite".into()));
    }
    if b.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("b must be positive and finite".into()));
    }
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    let lhs = a.iter().zip(b).map(|(&x, &y)| term(x, y)).sum();
    let rhs = term(a.iter().sum(), b.iter().sum());
    let holds = lhs >= rhs - 1e-12 * rhs.abs().max(1.0);
    Ok(LogSumCheck { lhs, rhs, holds })
}

/// One-layer linear model `softmax(Â X W)` used by the correlation study.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub model: SgcModel,
    epochs_trained: usize,
}

impl LinearProbe {
    pub fn new(graph: &Graph, master: u64) -> Result<Self> {
        let mut rng = seed::stream(master, "probe-init");
        Ok(Self {
            model: SgcModel::init(1, graph.feature_dim(), graph.num_classes, &mut rng)?,
            epochs_trained: 0,
        })
    }

    /// Train on the graph's train mask with `D^{-1}(A + I)` propagation.
    pub fn fit(&mut self, graph: &Graph, cfg: &TrainConfig) -> Result<TrainReport> {
        let op = normalize(&graph.adjacency, NormMode::Row, true)?;
        let (report, model) = train_sgc(self.model.clone(), graph, &op, cfg)?;
        self.model = model;
        self.epochs_trained += report.epochs_run;
        Ok(report)
    }

    pub fn is_trained(&self) -> bool {
        self.epochs_trained > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    /// Entropy of each node's aggregated prediction.
    pub u: Vec<f64>,
    /// `Σ_j Â_ij u'_j`, with `u'` the entropy of predictions from raw features.
    pub neighbor_entropy: Vec<f64>,
    /// Pearson r; `None` when either series has zero variance.
    pub r: Option<f64>,
}

impl CorrelationReport {
    pub fn is_degenerate(&self) -> bool {
        self.r.is_none()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["node", "u_i", "neighbor_avg_entropy"]).map_err(|e| csv_error(path, e))?;
        for i in 0..self.u.len() {
            w.write_record([i.to_string(), self.u[i].to_string(), self.neighbor_entropy[i].to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Pearson correlation; `None` if either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn entropy_correlation(graph: &Graph, probe: &LinearProbe) -> Result<CorrelationReport> {
    if !probe.is_trained() {
        return Err(Error::Untrained);
    }
    if graph.n() < 3 {
        return Err(Error::InvalidInput("correlation needs at least 3 nodes".into()));
    }
    let op = normalize(&graph.adjacency, NormMode::Row, true)?;
    let raw = graph.features.matmul(&probe.model.w.value)?;
    let u0 = entropy(&ProbMatrix::from_logits(&raw)).entropy().to_vec();
    let aggregated = op.matrix().spmm(&raw)?;
    let u = entropy(&ProbMatrix::from_logits(&aggregated)).entropy().to_vec();
    let neighbor_entropy = (0..graph.n())
        .map(|i| {
            let (cols, w) = op.matrix().row(i);
            cols.iter().zip(w).map(|(&j, a)| a * u0[j]).sum()
        })
        .collect::<Vec<f64>>();
    let r = pearson(&u, &neighbor_entropy);
    Ok(CorrelationReport { u, neighbor_entropy, r })
}
