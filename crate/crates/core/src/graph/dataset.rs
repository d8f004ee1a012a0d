use serde::{Deserialize, Serialize};

use super::adjacency::WeightedAdjacency;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitMasks {
    pub fn empty(n: usize) -> Self {
        Self {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn from_indices(n: usize, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self> {
        let mut m = Self::empty(n);
        for (mask, ids) in [(&mut m.train, train), (&mut m.val, val), (&mut m.test, test)] {
            for &i in ids {
                if i >= n {
                    return Err(Error::InvalidInput(format!("mask index {i} ≥ n = {n}")));
                }
                mask[i] = true;
            }
        }
        m.validate(n)?;
        Ok(m)
    }

    pub fn all_train(n: usize) -> Self {
        Self {
            train: vec![true; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(Error::dims("SplitMasks", n, self.train.len()));
        }
        for i in 0..n {
            let c = self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8;
            if c > 1 {
                return Err(Error::InvalidInput(format!("node {i} is in more than one split")));
            }
        }
        Ok(())
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn train_idx(&self) -> Vec<usize> {
        Self::indices(&self.train)
    }

    pub fn val_idx(&self) -> Vec<usize> {
        Self::indices(&self.val)
    }

    pub fn test_idx(&self) -> Vec<usize> {
        Self::indices(&self.test)
    }
}

/// A node-classification dataset: structure, features, labels and splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub adjacency: WeightedAdjacency,
    pub features: DenseMatrix,
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub masks: SplitMasks,
}

impl Graph {
    pub fn new(
        adjacency: WeightedAdjacency,
        features: DenseMatrix,
        labels: Vec<Option<usize>>,
        masks: SplitMasks,
    ) -> Result<Self> {
        let num_classes = labels.iter().flatten().max().map_or(0, |&k| k + 1);
        let g = Self {
            adjacency,
            features,
            labels,
            num_classes,
            masks,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.adjacency.n() != n {
            return Err(Error::dims("Graph adjacency", n, self.adjacency.n()));
        }
        if self.labels.len() != n {
            return Err(Error::dims("Graph labels", n, self.labels.len()));
        }
        if !self.features.is_finite() {
            return Err(Error::NonFinite("features".into()));
        }
        if let Some(k) = self.labels.iter().flatten().find(|&&k| k >= self.num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {k} outside [0, {})",
                self.num_classes
            )));
        }
        self.masks.validate(n)
    }

    /// Errors unless train and validation nodes are nonempty and labeled.
    pub fn require_supervision(&self) -> Result<()> {
        let train = self.masks.train_idx();
        if train.is_empty() {
            return Err(Error::Precondition("train mask is empty".into()));
        }
        if self.masks.val_idx().is_empty() {
            return Err(Error::Precondition("validation mask is empty".into()));
        }
        for i in train.into_iter().chain(self.masks.val_idx()) {
            if self.labels[i].is_none() {
                return Err(Error::Precondition(format!("node {i} is in a split but unlabeled")));
            }
        }
        Ok(())
    }

    /// Fraction of undirected off-diagonal edges joining same-label nodes.
    pub fn edge_homophily(&self) -> f64 {
        let mut same = 0usize;
        let mut total = 0usize;
        for (i, j, _) in self.adjacency.matrix().iter() {
            if i < j {
                if let (Some(a), Some(b)) = (self.labels[i], self.labels[j]) {
                    total += 1;
                    same += (a == b) as usize;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            same as f64 / total as f64
        }
    }

    pub fn with_adjacency(&self, adjacency: WeightedAdjacency) -> Result<Self> {
        let g = Self {
            adjacency,
            ..self.clone()
        };
        g.validate()?;
        Ok(g)
    }
}
