use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use ungsl_core::graph::{Graph, SplitMasks, WeightedAdjacency};
use ungsl_core::numerics::{norm, DenseMatrix};
use ungsl_core::seed;

use crate::error::{HarnessError, Result};

/// Stochastic block model with Gaussian class-prototype features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmConfig {
    pub n: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    /// Norm of the class prototypes against unit-variance noise.
    pub signal: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            n: 500,
            classes: 4,
            p_in: 0.05,
            p_out: 0.005,
            dim: 32,
            signal: 1.0,
            seed: 0,
        }
    }
}

impl SbmConfig {
    /// Edge probabilities giving expected degree `degree` and edge homophily `h`.
    pub fn with_homophily(n: usize, classes: usize, degree: f64, h: f64) -> Self {
        let per_class = n as f64 / classes as f64;
        // degree ≈ p_in·n/K + p_out·(K−1)·n/K, h = p_in / (p_in + (K−1)·p_out)
        let p_in = h * degree / per_class;
        let p_out = if classes > 1 {
            (1.0 - h) * degree / (per_class * (classes - 1) as f64)
        } else {
            0.0
        };
        Self {
            n,
            classes,
            p_in,
            p_out,
            ..Default::default()
        }
    }

    /// `p_in / (p_in + (K − 1) p_out)`
    pub fn homophily(&self) -> f64 {
        let denom = self.p_in + (self.classes as f64 - 1.0) * self.p_out;
        if denom == 0.0 {
            1.0
        } else {
            self.p_in / denom
        }
    }

    pub fn expected_degree(&self) -> f64 {
        let per_class = self.n as f64 / self.classes as f64;
        self.p_in * (per_class - 1.0) + self.p_out * per_class * (self.classes as f64 - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.n < self.classes {
            return Err(HarnessError::Config("SBM needs at least 2 classes and one node per class".into()));
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(HarnessError::Config("SBM needs 0 ≤ p_out ≤ p_in ≤ 1".into()));
        }
        if self.dim == 0 || !(self.signal >= 0.0) {
            return Err(HarnessError::Config("SBM needs dim ≥ 1 and signal ≥ 0".into()));
        }
        if self.expected_degree() <= 0.0 {
            return Err(HarnessError::Config("SBM parameters imply expected degree 0".into()));
        }
        Ok(())
    }
}

/// Sample a graph: balanced blocks, each node pair joined independently,
/// features `s · prototype(class) + N(0, I)`, stratified 10/10/80 split.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.n;
    let k = cfg.classes;
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();

    let mut rng = seed::stream(cfg.seed, "sbm-edges");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if p > 0.0 && rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    let adjacency = WeightedAdjacency::from_undirected(n, edges)?;

    let mut rng = seed::stream(cfg.seed, "sbm-features");
    let mut prototypes = DenseMatrix::random_normal(k, cfg.dim, 1.0, &mut rng);
    for c in 0..k {
        let r = norm(prototypes.row(c)).max(1e-12);
        prototypes.row_mut(c).iter_mut().for_each(|v| *v *= cfg.signal / r);
    }
    let mut features = DenseMatrix::zeros(n, cfg.dim);
    for i in 0..n {
        let proto = prototypes.row(labels[i]).to_vec();
        for (v, p) in features.row_mut(i).iter_mut().zip(proto) {
            *v = p + rng.sample::<f64, _>(StandardNormal);
        }
    }

    let mut rng = seed::stream(cfg.seed, "sbm-split");
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for c in 0..k {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let m = members.len();
        let n_train = ((m as f64) * 0.1).round().max(1.0) as usize;
        let n_val = ((m as f64) * 0.1).round().max(1.0) as usize;
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    let masks = SplitMasks::from_indices(n, &train, &val, &test)?;
    Ok(Graph::new(adjacency, features, labels.into_iter().map(Some).collect(), masks)?)
}
