//! Per-node in-neighbor removal on a learned structure.
//!
//! Row `i` of a structure lists the sources feeding node `i`. For ratio `r`
//! each node loses `⌊r · d_i⌋` of its `d_i` off-diagonal entries, but never
//! the last one. Self-loops are kept.

use rand::seq::index::sample;
use rand::Rng;

use ungsl_core::graph::WeightedAdjacency;

use crate::error::{HarnessError, Result};

/// Number of in-neighbors removed from a node with `degree` of them.
pub fn removal_count(ratio: f64, degree: usize) -> usize {
    let k = (ratio * degree as f64).floor() as usize;
    k.min(degree.saturating_sub(1))
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(HarnessError::Config(format!("prune ratio {ratio} outside [0, 1)")));
    }
    Ok(())
}

/// Drop, per row, the entries at the positions `choose` returns. `choose`
/// gets the row index, its off-diagonal columns and the removal count.
fn prune_rows(
    s: &WeightedAdjacency,
    ratio: f64,
    mut choose: impl FnMut(usize, &[usize], usize) -> Vec<usize>,
) -> Result<WeightedAdjacency> {
    check_ratio(ratio)?;
    let m = s.matrix();
    let mut kept = Vec::with_capacity(m.nnz());
    for i in 0..m.n_rows() {
        let (cols, vals) = m.row(i);
        let off: Vec<usize> = cols.iter().copied().filter(|&j| j != i).collect();
        let count = removal_count(ratio, off.len());
        let mut drop = vec![false; off.len()];
        if count > 0 {
            for p in choose(i, &off, count) {
                drop[p] = true;
            }
        }
        let mut k = 0;
        for (&j, &w) in cols.iter().zip(vals) {
            if j == i {
                kept.push((i, j, w));
            } else {
                if !drop[k] {
                    kept.push((i, j, w));
                }
                k += 1;
            }
        }
    }
    Ok(WeightedAdjacency::from_edges(m.n_rows(), kept)?)
}

/// Remove the highest-entropy in-neighbors of every node. Ties go to the
/// larger node id so the result is deterministic.
pub fn prune_by_entropy(s: &WeightedAdjacency, entropy: &[f64], ratio: f64) -> Result<WeightedAdjacency> {
    if entropy.len() != s.n() {
        return Err(HarnessError::Config(format!(
            "entropy vector has {} entries for {} nodes",
            entropy.len(),
            s.n()
        )));
    }
    prune_rows(s, ratio, |_, off, count| {
        let mut order: Vec<usize> = (0..off.len()).collect();
        order.sort_by(|&a, &b| entropy[off[b]].total_cmp(&entropy[off[a]]).then(off[b].cmp(&off[a])));
        order.truncate(count);
        order
    })
}

/// Remove a uniformly random selection of in-neighbors of every node.
pub fn prune_random<R: Rng + ?Sized>(s: &WeightedAdjacency, ratio: f64, rng: &mut R) -> Result<WeightedAdjacency> {
    prune_rows(s, ratio, |_, off, count| sample(rng, off.len(), count).into_vec())
}
