//! Run configuration files (TOML). Every field has a default and unknown keys
//! are rejected.
//!
//! ```toml
//! seeds = [0, 1, 2]
//!
//! [dataset.sbm]
//! n = 800
//! p_in = 0.048
//! p_out = 0.0107
//!
//! [[noise]]
//! kind = "edge_add"
//! level = 0.4
//!
//! [gsl]
//! method = "similarity_residual"
//!
//! [ungsl]
//! beta = 0.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ungsl_core::gnn::TrainConfig;
use ungsl_core::graph::{io, Graph};
use ungsl_core::gsl::GslConfig;
use ungsl_core::plugin::{PipelineOptions, UnGslConfig};

use crate::error::{HarnessError, Result};
use crate::noise::{inject_noise, NoiseKind, NoiseSpec};
use crate::sbm::{generate_sbm, SbmConfig};

/// Where the graph comes from: a graph directory or a generated SBM. With
/// neither set, the default SBM is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub sbm: Option<SbmConfig>,
    /// Draw a fresh SBM and fresh noise for every run seed (seeds offset by
    /// the run seed). When false the graph is the same for all seeds.
    pub per_seed: bool,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.path, &self.sbm) {
            (Some(_), Some(_)) => Err(HarnessError::Config(
                "dataset: set either `path` or `[dataset.sbm]`, not both".into(),
            )),
            (None, Some(sbm)) => sbm.validate(),
            _ => Ok(()),
        }
    }
}

/// Protocol parameters for `experiment` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub prune_ratios: Vec<f64>,
    pub fixed_fraction: f64,
    pub noise_kind: NoiseKind,
    pub levels: Vec<f64>,
    /// Values for `sweep`; empty means the protocol's built-in grid.
    pub sweep_values: Vec<f64>,
    pub overhead_sizes: Vec<usize>,
    pub overhead_repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            prune_ratios: vec![0.0, 0.1, 0.2, 0.3],
            fixed_fraction: 0.2,
            noise_kind: NoiseKind::EdgeAdd,
            levels: vec![0.0, 0.2, 0.4],
            sweep_values: Vec::new(),
            overhead_sizes: vec![200, 400, 800, 1600],
            overhead_repeats: 3,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.prune_ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(HarnessError::Config(format!("prune ratio {r} outside [0, 1)")));
        }
        if !(0.0..=1.0).contains(&self.fixed_fraction) {
            return Err(HarnessError::Config(format!(
                "fixed fraction {} outside [0, 1]",
                self.fixed_fraction
            )));
        }
        if let Some(l) = self.levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(HarnessError::Config(format!("noise level {l} outside [0, 1]")));
        }
        if self.overhead_repeats == 0 {
            return Err(HarnessError::Config("overhead_repeats must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seeds; each run derives all of its randomness from one of them.
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    pub noise: Vec<NoiseSpec>,
    pub gsl: GslConfig,
    pub ungsl: UnGslConfig,
    /// `train.seed` is ignored: the run seed replaces it.
    pub train: TrainConfig,
    pub pipeline: PipelineOptions,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            dataset: DatasetConfig {
                per_seed: true,
                ..Default::default()
            },
            noise: Vec::new(),
            gsl: GslConfig::default(),
            ungsl: UnGslConfig::default(),
            train: TrainConfig::default(),
            pipeline: PipelineOptions::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|source| HarnessError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        self.dataset.validate()?;
        for spec in &self.noise {
            spec.validate()?;
        }
        self.gsl.validate()?;
        self.ungsl.validate()?;
        self.train.validate()?;
        self.experiment.validate()
    }

    /// Training settings for one run.
    pub fn train_for(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    /// The graph a run with master seed `seed` works on, noise applied in
    /// list order.
    pub fn build_graph(&self, seed: u64) -> Result<Graph> {
        let offset = if self.dataset.per_seed { seed } else { 0 };
        let mut graph = match (&self.dataset.path, &self.dataset.sbm) {
            (Some(path), _) => io::read_graph_dir(path)?,
            (None, sbm) => {
                let mut sbm = sbm.clone().unwrap_or_default();
                sbm.seed = sbm.seed.wrapping_add(offset);
                generate_sbm(&sbm)?
            }
        };
        for spec in &self.noise {
            let spec = NoiseSpec {
                seed: spec.seed.wrapping_add(offset),
                ..*spec
            };
            graph = inject_noise(&graph, &spec)?;
        }
        Ok(graph)
    }
}
