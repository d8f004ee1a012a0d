#![allow(dead_code)]

use rand::Rng;
use ungsl_core::graph::{Graph, SplitMasks, WeightedAdjacency};
use ungsl_core::numerics::DenseMatrix;
use ungsl_core::seed;

/// Small planted-partition graph with class-shifted Gaussian features and a
/// round-robin 10/10/80 split.
pub fn block_graph(n: usize, classes: usize, p_in: f64, p_out: f64, d: usize, signal: f64, master: u64) -> Graph {
    let mut rng = seed::stream(master, "test-graph");
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    let adjacency = WeightedAdjacency::from_undirected(n, edges).unwrap();
    let mut features = DenseMatrix::random_normal(n, d, 1.0, &mut rng);
    for i in 0..n {
        let c = labels[i] % d;
        features.row_mut(i)[c] += signal;
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for i in 0..n {
        match (i / classes) % 10 {
            0 => train.push(i),
            1 => val.push(i),
            _ => test.push(i),
        }
    }
    let masks = SplitMasks::from_indices(n, &train, &val, &test).unwrap();
    Graph::new(adjacency, features, labels.into_iter().map(Some).collect(), masks).unwrap()
}

/// Random small instance for gradient checks: a connected-ish directed graph
/// with positive weights.
pub fn random_instance(n: usize, d: usize, classes: usize, master: u64) -> Graph {
    let mut rng = seed::stream(master, "grad-instance");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < 0.4 {
                edges.push((i, j, 0.2 + rng.random::<f64>()));
            }
        }
    }
    let adjacency = WeightedAdjacency::from_edges(n, edges).unwrap();
    let features = DenseMatrix::random_normal(n, d, 1.0, &mut rng);
    let labels = (0..n).map(|i| Some(i % classes)).collect();
    let masks = SplitMasks::all_train(n);
    Graph::new(adjacency, features, labels, masks).unwrap()
}
