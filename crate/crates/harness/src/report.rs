//! Mean ± std summaries of run records, one row per configuration fingerprint.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::records::ExperimentRecord;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: sample_std(xs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub fingerprint: String,
    pub protocol: String,
    pub label: String,
    pub seeds: Vec<u64>,
    /// Test accuracy of the base run.
    pub base: Stat,
    /// Test accuracy after re-training with reweighting.
    pub enhanced: Option<Stat>,
}

impl ReportRow {
    /// Mean of per-seed (enhanced − base) differences.
    pub fn delta(&self) -> Option<f64> {
        self.enhanced.map(|e| e.mean - self.base.mean)
    }

    /// Relative improvement of the means, in percent.
    pub fn relative_improvement(&self) -> Option<f64> {
        self.delta().map(|d| 100.0 * d / self.base.mean)
    }
}

/// Group records by fingerprint in order of first appearance. Within a
/// group, a record repeated for the same seed counts once (the first one).
pub fn summarize(records: &[ExperimentRecord]) -> Result<Vec<ReportRow>> {
    if records.is_empty() {
        return Err(HarnessError::Config("no run records to report".into()));
    }
    let mut groups: Vec<(String, Vec<&ExperimentRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(f, _)| *f == r.fingerprint) {
            Some((_, g)) => {
                if g.iter().all(|x| x.seed != r.seed) {
                    g.push(r);
                }
            }
            None => groups.push((r.fingerprint.clone(), vec![r])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(fingerprint, g)| {
            let base: Vec<f64> = g.iter().map(|r| r.base.test_acc).collect();
            let enhanced: Option<Vec<f64>> = g.iter().map(|r| r.enhanced.as_ref().map(|e| e.test_acc)).collect();
            ReportRow {
                fingerprint,
                protocol: g[0].spec.protocol.clone(),
                label: g[0].label.clone(),
                seeds: g.iter().map(|r| r.seed).collect(),
                base: Stat::of(&base),
                enhanced: enhanced.map(|e| Stat::of(&e)),
            }
        })
        .collect())
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Plain-text table with accuracies in percent.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<22} {:<24} {:>5} {:>15} {:>15} {:>8} {:>8}",
        "fingerprint", "protocol", "label", "runs", "base", "ungsl", "delta", "rel %"
    );
    for r in rows {
        let (enh, delta, rel) = match r.enhanced {
            Some(e) => (
                format!("{}±{}", pct(e.mean), pct(e.std)),
                format!("{:+.2}", 100.0 * r.delta().unwrap_or(0.0)),
                format!("{:+.2}", r.relative_improvement().unwrap_or(0.0)),
            ),
            None => ("-".into(), "-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{:<12} {:<22} {:<24} {:>5} {:>15} {:>15} {:>8} {:>8}",
            &r.fingerprint[..r.fingerprint.len().min(12)],
            r.protocol,
            r.label,
            r.seeds.len(),
            format!("{}±{}", pct(r.base.mean), pct(r.base.std)),
            enh,
            delta,
            rel
        );
    }
    out
}

/// `fingerprint,protocol,label,runs,base_mean,base_std,ungsl_mean,ungsl_std,delta,relative_improvement_pct`
/// with accuracies as fractions; empty cells where there is no re-trained run.
pub fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    w.write_record([
        "fingerprint",
        "protocol",
        "label",
        "runs",
        "base_mean",
        "base_std",
        "ungsl_mean",
        "ungsl_std",
        "delta",
        "relative_improvement_pct",
    ])
    .map_err(|e| HarnessError::csv(path, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.fingerprint.clone(),
            r.protocol.clone(),
            r.label.clone(),
            r.seeds.len().to_string(),
            r.base.mean.to_string(),
            r.base.std.to_string(),
            opt(r.enhanced.map(|e| e.mean)),
            opt(r.enhanced.map(|e| e.std)),
            opt(r.delta()),
            opt(r.relative_improvement()),
        ])
        .map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::records::{RunMode, RunSpec};
    use ungsl_core::gnn::TrainReport;

    fn rec(spec: &RunSpec, seed: u64, base: f64, enhanced: Option<f64>) -> ExperimentRecord {
        let report = |acc| TrainReport {
            best_val_acc: acc,
            test_acc: acc,
            best_epoch: 0,
            epochs_run: 1,
            loss_series: vec![1.0],
            wall_clock_secs: 0.0,
        };
        ExperimentRecord {
            fingerprint: spec.fingerprint(),
            seed,
            label: spec.protocol.clone(),
            spec: spec.clone(),
            base: report(base),
            enhanced: enhanced.map(report),
            stage_secs: vec![],
            artifacts: vec![],
        }
    }

    #[test]
    fn single_record_has_zero_std() {
        let spec = RunSpec::new("train", RunMode::Base, &RunConfig::default());
        let rows = summarize(&[rec(&spec, 0, 0.7, None)]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].base, Stat { mean: 0.7, std: 0.0 });
        assert_eq!(rows[0].delta(), None);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn groups_by_fingerprint_in_order() {
        let a = RunSpec::new("a", RunMode::Base, &RunConfig::default());
        let b = RunSpec::new("b", RunMode::Gcn, &RunConfig::default());
        let recs = [
            rec(&b, 0, 0.5, None),
            rec(&a, 0, 0.6, Some(0.7)),
            rec(&b, 1, 0.7, None),
            rec(&a, 1, 0.8, Some(0.8)),
            rec(&a, 1, 0.1, Some(0.1)),
        ];
        let rows = summarize(&recs).unwrap();
        assert_eq!(rows.iter().map(|r| r.protocol.as_str()).collect::<Vec<_>>(), vec!["b", "a"]);
        assert_eq!(rows[0].seeds, vec![0, 1]);
        assert!((rows[1].base.mean - 0.7).abs() < 1e-15);
        assert!((rows[1].delta().unwrap() - 0.05).abs() < 1e-12);
        assert!((rows[1].relative_improvement().unwrap() - 100.0 * 0.05 / 0.7).abs() < 1e-9);
        let table = format_table(&rows);
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn csv_has_one_row_per_group() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let a = RunSpec::new("a", RunMode::Base, &RunConfig::default());
        let rows = summarize(&[rec(&a, 0, 0.5, Some(0.75)), rec(&a, 1, 0.25, Some(0.5))]).unwrap();
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[3], "2");
        assert_eq!(fields[8], "0.25");
        assert!((fields[9].parse::<f64>().unwrap() - 100.0 * 0.25 / 0.375).abs() < 1e-9);
    }
}
