//! Cost of the reweighting plug-in: training-time overhead on one dataset and
//! how a single reweighting pass scales with the number of edges.

use std::path::Path;
use std::time::Instant;

use rand::Rng;

use ungsl_core::gsl::StructureLearner;
use ungsl_core::plugin::{retrain, reweight, run_base, ThresholdVector, Variant};
use ungsl_core::seed;
use ungsl_core::uncertainty::{UncertaintySource, UncertaintyVector};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::sbm::{generate_sbm, SbmConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    /// Stored off-diagonal entries of the structure.
    pub m_offdiag: usize,
    pub psi_evaluations: usize,
    /// Seconds per reweighting pass.
    pub reweight_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadReport {
    /// Median wall-clock of base training and of re-training with the
    /// plug-in attached, both for the full epoch budget.
    pub base_secs: f64,
    pub ungsl_secs: f64,
    pub scaling: Vec<ScalingRow>,
    /// Least-squares fit of reweight seconds against `m_offdiag`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl OverheadReport {
    /// Re-training time relative to base training.
    pub fn ratio(&self) -> f64 {
        self.ungsl_secs / self.base_secs
    }

    /// `n,m_offdiag,psi_evaluations,reweight_secs`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
        w.write_record(["n", "m_offdiag", "psi_evaluations", "reweight_secs"])
            .map_err(|e| HarnessError::csv(path, e))?;
        for r in &self.scaling {
            w.write_record([
                r.n.to_string(),
                r.m_offdiag.to_string(),
                r.psi_evaluations.to_string(),
                r.reweight_secs.to_string(),
            ])
            .map_err(|e| HarnessError::csv(path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept` and its R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// SBM of `n` nodes with the same expected degree as `template`.
fn scaled(template: &SbmConfig, n: usize) -> SbmConfig {
    let f = template.n as f64 / n as f64;
    SbmConfig {
        n,
        p_in: (template.p_in * f).min(1.0),
        p_out: (template.p_out * f).min(1.0),
        ..template.clone()
    }
}

/// Time base training against re-training with the plug-in (early stopping
/// off so both run every epoch, sequentially, median of `repeats`), then time
/// one reweighting pass on the learned-structure support of SBMs of each size.
pub fn overhead_report(cfg: &RunConfig, sizes: &[usize], repeats: usize) -> Result<OverheadReport> {
    cfg.validate()?;
    if sizes.len() < 2 {
        return Err(HarnessError::Config("overhead report needs at least two sizes".into()));
    }
    let repeats = repeats.max(1);
    let seed = cfg.seeds[0];
    let graph = cfg.build_graph(seed)?;
    let mut tc = cfg.train_for(seed);
    tc.patience = tc.epochs;

    let mut base_t = Vec::with_capacity(repeats);
    let mut ungsl_t = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let base = run_base(&graph, &cfg.gsl, &tc, &cfg.pipeline)?;
        let out = retrain(&graph, &base, &cfg.gsl, &cfg.ungsl, &tc, Variant::Learnable)?;
        base_t.push(base.stage_secs[0]);
        ungsl_t.push(out.stage_secs[2]);
    }

    let template = cfg.dataset.sbm.clone().unwrap_or_default();
    let mut scaling = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let g = generate_sbm(&SbmConfig { seed, ..scaled(&template, n) })?;
        let mut gsl = cfg.gsl.clone();
        gsl.k = gsl.k.min(n - 1);
        let s = StructureLearner::new(&g, gsl, &tc)?.build_structure()?;
        let mut rng = seed::stream(seed, "overhead-uncertainty");
        let max_u = (g.num_classes as f64).ln();
        let u = UncertaintyVector::from_uncertainty(
            (0..n).map(|_| rng.random_range(0.0..=max_u)).collect(),
            UncertaintySource::Entropy,
        )?;
        let eps = ThresholdVector::init(n, &mut seed::stream(seed, "overhead-eps"));
        let refined = reweight(&s, &u, eps.values(), &cfg.ungsl)?;
        // best of `repeats` batches, each long enough to dwarf timer resolution
        let mut best = f64::INFINITY;
        for _ in 0..repeats {
            let (mut calls, t) = (0u32, Instant::now());
            while calls < 5 || t.elapsed().as_secs_f64() < 0.05 {
                std::hint::black_box(reweight(&s, &u, eps.values(), &cfg.ungsl)?);
                calls += 1;
            }
            best = best.min(t.elapsed().as_secs_f64() / calls as f64);
        }
        scaling.push(ScalingRow {
            n,
            m_offdiag: s.matrix().count_off_diagonal(),
            psi_evaluations: refined.psi_evaluations(),
            reweight_secs: best,
        });
    }
    let x: Vec<f64> = scaling.iter().map(|r| r.m_offdiag as f64).collect();
    let y: Vec<f64> = scaling.iter().map(|r| r.reweight_secs).collect();
    let (slope, intercept, r_squared) = linear_fit(&x, &y);
    Ok(OverheadReport {
        base_secs: median(base_t),
        ungsl_secs: median(ungsl_t),
        scaling,
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_line() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 0.5).collect();
        let (s, c, r2) = linear_fit(&x, &y);
        assert!((s - 3.0).abs() < 1e-12 && (c - 0.5).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        let (_, _, r2) = linear_fit(&x, &[1.0, 0.0, 1.0, 0.0]);
        assert!(r2 < 0.5);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn scaling_keeps_degree() {
        let t = SbmConfig::default();
        let s = scaled(&t, 1000);
        assert!((s.expected_degree() - t.expected_degree()).abs() / t.expected_degree() < 0.01);
    }

    #[test]
    fn psi_count_matches_offdiagonal_entries() {
        let mut cfg = RunConfig::default();
        cfg.dataset.sbm = Some(SbmConfig {
            n: 60,
            dim: 4,
            p_in: 0.2,
            p_out: 0.02,
            ..Default::default()
        });
        cfg.train.epochs = 3;
        cfg.train.hidden = 4;
        cfg.gsl.k = 3;
        cfg.gsl.encoder_width = 4;
        let r = overhead_report(&cfg, &[40, 80], 1).unwrap();
        assert_eq!(r.scaling.len(), 2);
        for row in &r.scaling {
            assert_eq!(row.psi_evaluations, row.m_offdiag);
        }
        assert!(r.base_secs > 0.0 && r.ungsl_secs > 0.0);
        assert!(overhead_report(&cfg, &[40], 1).is_err());
    }
}
