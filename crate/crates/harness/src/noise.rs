use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use ungsl_core::graph::{Graph, WeightedAdjacency};
use ungsl_core::seed;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    EdgeAdd,
    EdgeDelete,
    FeatureMask,
    LabelFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, level: f64, seed: u64) -> Self {
        Self { kind, level, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.level) {
            return Err(HarnessError::Config(format!("noise level {} outside [0, 1]", self.level)));
        }
        Ok(())
    }
}

fn floor_count(level: f64, total: usize) -> usize {
    (level * total as f64).floor() as usize
}

/// Perturb `graph`. Counts are `⌊level · total⌋`: edges for edge noise
/// (undirected pairs), entries of the feature matrix, training labels.
pub fn inject_noise(graph: &Graph, spec: &NoiseSpec) -> Result<Graph> {
    spec.validate()?;
    let mut g = graph.clone();
    if spec.level == 0.0 {
        return Ok(g);
    }
    let mut rng = seed::stream(spec.seed, "noise");
    let n = graph.n();
    match spec.kind {
        NoiseKind::EdgeDelete | NoiseKind::EdgeAdd => {
            let edges = undirected_edges(&graph.adjacency);
            let count = floor_count(spec.level, edges.len());
            let new_edges = if spec.kind == NoiseKind::EdgeDelete {
                let drop: HashSet<usize> = sample(&mut rng, edges.len(), count).into_iter().collect();
                edges
                    .into_iter()
                    .enumerate()
                    .filter(|(e, _)| !drop.contains(e))
                    .map(|(_, t)| t)
                    .collect()
            } else {
                add_edges(n, edges, count, &mut rng)?
            };
            g.adjacency = WeightedAdjacency::from_undirected(n, new_edges)?;
        }
        NoiseKind::FeatureMask => {
            let total = g.features.as_slice().len();
            let count = floor_count(spec.level, total);
            let x = g.features.as_mut_slice();
            for idx in sample(&mut rng, total, count) {
                x[idx] = 0.0;
            }
        }
        NoiseKind::LabelFlip => {
            let train = graph.masks.train_idx();
            let count = floor_count(spec.level, train.len());
            let k = graph.num_classes;
            if k < 2 {
                return Err(HarnessError::Config("label flipping needs at least 2 classes".into()));
            }
            for pos in sample(&mut rng, train.len(), count) {
                let i = train[pos];
                let old = graph.labels[i].expect("training nodes are labeled");
                let shift = rng.random_range(1..k);
                g.labels[i] = Some((old + shift) % k);
            }
        }
    }
    Ok(g)
}

/// Undirected edges `(i, j, w)` with `i < j` (self-loops kept as `(i, i, w)`).
fn undirected_edges(adj: &WeightedAdjacency) -> Vec<(usize, usize, f64)> {
    adj.matrix().iter().filter(|&(i, j, _)| i <= j).collect()
}

fn add_edges<R: Rng + ?Sized>(
    n: usize,
    mut edges: Vec<(usize, usize, f64)>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize, f64)>> {
    let mut present: HashSet<(usize, usize)> = edges.iter().map(|&(i, j, _)| (i, j)).collect();
    let existing = edges.iter().filter(|(i, j, _)| i != j).count();
    let capacity = n * (n - 1) / 2 - existing;
    if count > capacity {
        return Err(HarnessError::Config(format!(
            "cannot add {count} edges: only {capacity} non-edges remain"
        )));
    }
    if count > capacity / 2 {
        // dense regime: enumerate the complement and sample from it
        let mut free = Vec::with_capacity(capacity);
        for i in 0..n {
            for j in (i + 1)..n {
                if !present.contains(&(i, j)) {
                    free.push((i, j));
                }
            }
        }
        for idx in sample(rng, free.len(), count) {
            let (i, j) = free[idx];
            edges.push((i, j, 1.0));
        }
        return Ok(edges);
    }
    let mut added = 0;
    while added < count {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let key = (i.min(j), i.max(j));
        if i != j && present.insert(key) {
            edges.push((key.0, key.1, 1.0));
            added += 1;
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{generate_sbm, SbmConfig};
    use ungsl_core::graph::SplitMasks;
    use ungsl_core::numerics::DenseMatrix;

    fn small() -> Graph {
        generate_sbm(&SbmConfig {
            n: 100,
            ..Default::default()
        })
        .unwrap()
    }

    fn ten_edges() -> Graph {
        let edges: Vec<_> = (0..10).map(|i| (i, i + 1, 1.0)).collect();
        let adj = WeightedAdjacency::from_undirected(11, edges).unwrap();
        let labels = (0..11).map(|i| Some(i % 2)).collect();
        Graph::new(adj, DenseMatrix::zeros(11, 2), labels, SplitMasks::all_train(11)).unwrap()
    }

    #[test]
    fn level_zero_is_identity() {
        let g = small();
        for kind in [NoiseKind::EdgeAdd, NoiseKind::EdgeDelete, NoiseKind::FeatureMask, NoiseKind::LabelFlip] {
            let h = inject_noise(&g, &NoiseSpec::new(kind, 0.0, 1)).unwrap();
            assert_eq!(h.adjacency.matrix(), g.adjacency.matrix());
            assert_eq!(h.features, g.features);
            assert_eq!(h.labels, g.labels);
        }
    }

    #[test]
    fn delete_count() {
        let g = ten_edges();
        let h = inject_noise(&g, &NoiseSpec::new(NoiseKind::EdgeDelete, 0.2, 3)).unwrap();
        assert_eq!(h.adjacency.undirected_edge_count(), 8);
        assert_eq!(h.n(), g.n());
    }

    #[test]
    fn add_count_and_monotone() {
        let g = small();
        let m = g.adjacency.undirected_edge_count();
        let h = inject_noise(&g, &NoiseSpec::new(NoiseKind::EdgeAdd, 0.4, 3)).unwrap();
        assert_eq!(h.adjacency.undirected_edge_count(), m + (0.4 * m as f64).floor() as usize);
        assert!(h.adjacency.matrix().is_symmetric(0.0));
    }

    #[test]
    fn add_infeasible() {
        let edges: Vec<_> = (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j, 1.0))).take(5).collect();
        let adj = WeightedAdjacency::from_undirected(4, edges).unwrap();
        let g = Graph::new(adj, DenseMatrix::zeros(4, 1), vec![Some(0); 4], SplitMasks::all_train(4)).unwrap();
        assert!(inject_noise(&g, &NoiseSpec::new(NoiseKind::EdgeAdd, 0.4, 0)).is_err());
        let full = inject_noise(&g, &NoiseSpec::new(NoiseKind::EdgeAdd, 0.2, 0)).unwrap();
        assert_eq!(full.adjacency.undirected_edge_count(), 6);
    }

    #[test]
    fn mask_count() {
        let mut g = ten_edges();
        g.features = DenseMatrix::filled(10 * 10, 10, 1.0);
        g.adjacency = WeightedAdjacency::empty(100);
        g.labels = vec![Some(0); 100];
        g.masks = SplitMasks::all_train(100);
        let h = inject_noise(&g, &NoiseSpec::new(NoiseKind::FeatureMask, 0.4, 5)).unwrap();
        assert_eq!(h.features.as_slice().iter().filter(|&&v| v == 0.0).count(), 400);
    }

    #[test]
    fn label_flip_touches_only_training_nodes() {
        let g = small();
        let h = inject_noise(&g, &NoiseSpec::new(NoiseKind::LabelFlip, 0.5, 9)).unwrap();
        let train = g.masks.train_idx();
        let changed: Vec<usize> = (0..g.n()).filter(|&i| g.labels[i] != h.labels[i]).collect();
        assert_eq!(changed.len(), train.len() / 2);
        assert!(changed.iter().all(|i| train.contains(i)));
    }

    #[test]
    fn deterministic_per_seed() {
        let g = small();
        let spec = NoiseSpec::new(NoiseKind::EdgeAdd, 0.3, 17);
        let a = inject_noise(&g, &spec).unwrap();
        let b = inject_noise(&g, &spec).unwrap();
        assert_eq!(a.adjacency.matrix(), b.adjacency.matrix());
    }
}
