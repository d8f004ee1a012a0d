use crate::error::{Error, Result};
use crate::graph::WeightedAdjacency;
use crate::uncertainty::UncertaintyVector;

use super::reweight::ThresholdVector;

/// Where the per-node thresholds come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdMode {
    /// Optimized jointly with the learner.
    Learnable(ThresholdVector),
    /// Held constant.
    Fixed(Vec<f64>),
    /// Recomputed on every build so that this fraction of each node's
    /// in-neighbors (the least confident ones) falls on the `β` branch.
    Quantile(f64),
}

impl ThresholdMode {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ThresholdMode::Learnable(t) if t.len() != n => Err(Error::dims("thresholds", n, t.len())),
            ThresholdMode::Fixed(v) if v.len() != n => Err(Error::dims("thresholds", n, v.len())),
            ThresholdMode::Fixed(v) if v.iter().any(|e| !e.is_finite()) => {
                Err(Error::NonFinite("fixed thresholds".into()))
            }
            ThresholdMode::Quantile(f) if !(0.0..=1.0).contains(f) => {
                Err(Error::InvalidInput(format!("fixed fraction {f} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, ThresholdMode::Learnable(_))
    }

    /// Thresholds to apply to `s`.
    pub fn thresholds(&self, s: &WeightedAdjacency, u: &UncertaintyVector) -> Result<Vec<f64>> {
        match self {
            ThresholdMode::Learnable(t) => Ok(t.values().to_vec()),
            ThresholdMode::Fixed(v) => Ok(v.clone()),
            ThresholdMode::Quantile(f) => quantile_thresholds(s, u.confidence(), *f),
        }
    }
}

/// Per-node thresholds placing `⌊fraction · deg_i⌋` of node `i`'s
/// off-diagonal in-neighbors below the threshold. Fraction 0 yields the
/// minimum neighbor confidence, fraction 1 a value just above the maximum.
pub fn quantile_thresholds(s: &WeightedAdjacency, confidence: &[f64], fraction: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!("fixed fraction {fraction} outside [0, 1]")));
    }
    if confidence.len() != s.n() {
        return Err(Error::dims("quantile_thresholds", s.n(), confidence.len()));
    }
    let m = s.matrix();
    let mut out = Vec::with_capacity(s.n());
    let mut cs = Vec::new();
    for i in 0..s.n() {
        cs.clear();
        cs.extend(m.row(i).0.iter().filter(|&&j| j != i).map(|&j| confidence[j]));
        if cs.is_empty() {
            out.push(0.0);
            continue;
        }
        cs.sort_by(f64::total_cmp);
        let q = (fraction * cs.len() as f64).floor() as usize;
        out.push(if q >= cs.len() { cs[cs.len() - 1].next_up() } else { cs[q] });
    }
    Ok(out)
}
