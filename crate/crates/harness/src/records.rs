//! Append-only run records: one JSON object per line in `runs.jsonl`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ungsl_core::gnn::TrainReport;
use ungsl_core::plugin::Variant;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

pub const RUNS_FILE: &str = "runs.jsonl";

/// What a single run executes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RunMode {
    /// Plain GCN on the input graph.
    Gcn,
    /// Base structure learner only.
    Base,
    /// Base training, frozen uncertainty, re-training with the given variant.
    Pipeline { variant: Variant },
    /// Base learner, structure pruned at `ratio` (entropy-guided or random),
    /// then a GCN on the pruned structure.
    Prune { ratio: f64, guided: bool },
}

/// Everything needed to re-execute a run, minus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub protocol: String,
    pub mode: RunMode,
    pub config: RunConfig,
}

impl RunSpec {
    pub fn new(protocol: impl Into<String>, mode: RunMode, config: &RunConfig) -> Self {
        let mut config = config.clone();
        config.seeds.clear();
        Self {
            protocol: protocol.into(),
            mode,
            config,
        }
    }

    /// Hex SHA-256 of the canonical JSON form (keys sorted, seeds excluded).
    pub fn fingerprint(&self) -> String {
        let mut spec = self.clone();
        spec.config.seeds.clear();
        // serde_json::Value keeps object keys in a BTreeMap, so this is canonical.
        let value = serde_json::to_value(&spec).expect("run spec serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub fingerprint: String,
    pub seed: u64,
    /// Human-readable row label for reports, e.g. `level=0.4`.
    pub label: String,
    pub spec: RunSpec,
    pub base: TrainReport,
    /// Re-trained run with reweighting; absent for base-only and GCN runs.
    pub enhanced: Option<TrainReport>,
    /// Wall-clock seconds per executed stage.
    pub stage_secs: Vec<f64>,
    pub artifacts: Vec<PathBuf>,
}

impl ExperimentRecord {
    /// Whether `other` reproduces this record: loss series bit-exact,
    /// accuracies within 1e-9.
    pub fn reproduced_by(&self, other: &ExperimentRecord) -> bool {
        fn same(a: &TrainReport, b: &TrainReport) -> bool {
            a.loss_series.len() == b.loss_series.len()
                && a.loss_series.iter().zip(&b.loss_series).all(|(x, y)| x.to_bits() == y.to_bits())
                && (a.test_acc - b.test_acc).abs() <= 1e-9
                && (a.best_val_acc - b.best_val_acc).abs() <= 1e-9
        }
        self.fingerprint == other.fingerprint
            && self.seed == other.seed
            && same(&self.base, &other.base)
            && match (&self.enhanced, &other.enhanced) {
                (Some(a), Some(b)) => same(a, b),
                (None, None) => true,
                _ => false,
            }
    }
}

/// Append records to `path`, one line each. Each line goes out in a single
/// write so a crash never leaves a partial record behind another.
pub fn append_records(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| HarnessError::io(path, e))?;
    for record in records {
        let mut line = serde_json::to_string(record).map_err(|source| HarnessError::Record {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?;
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| HarnessError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })
        })
        .collect()
}
