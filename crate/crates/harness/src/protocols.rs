//! Seeded runs and the comparison protocols built from them.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use ungsl_core::gnn::{train, GcnModel, TrainConfig, TrainReport};
use ungsl_core::graph::{normalize, Graph, NormMode, WeightedAdjacency};
use ungsl_core::gsl::structure_operator;
use ungsl_core::plugin::{retrain, run_base, BaseStage, PipelineOutput, Variant};
use ungsl_core::uncertainty::UncertaintyVector;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::prune::{prune_by_entropy, prune_random};
use crate::records::{ExperimentRecord, RunMode, RunSpec};

/// A finished run: its record plus the artifacts worth writing to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: ExperimentRecord,
    /// Final learned structure (re-trained one for pipeline runs).
    pub structure: Option<WeightedAdjacency>,
    pub uncertainty: Option<UncertaintyVector>,
    pub thresholds: Option<Vec<f64>>,
}

impl RunOutcome {
    fn new(spec: &RunSpec, seed: u64, label: &str, base: TrainReport, stage_secs: Vec<f64>) -> Self {
        Self {
            record: ExperimentRecord {
                fingerprint: spec.fingerprint(),
                seed,
                label: label.to_string(),
                spec: spec.clone(),
                base,
                enhanced: None,
                stage_secs,
                artifacts: Vec::new(),
            },
            structure: None,
            uncertainty: None,
            thresholds: None,
        }
    }

    fn from_pipeline(spec: &RunSpec, seed: u64, label: &str, out: PipelineOutput) -> Self {
        let mut o = Self::new(spec, seed, label, out.base, out.stage_secs.to_vec());
        o.record.enhanced = Some(out.enhanced);
        o.structure = Some(out.structure);
        o.uncertainty = Some(out.uncertainty);
        o.thresholds = out.thresholds;
        o
    }

    fn from_base(spec: &RunSpec, seed: u64, label: &str, base: BaseStage) -> Self {
        let mut o = Self::new(spec, seed, label, base.report, base.stage_secs.to_vec());
        o.structure = Some(base.structure);
        o.uncertainty = Some(base.uncertainty);
        o
    }
}

/// GCN on the symmetric-normalized input graph with self-loops.
pub fn train_plain_gcn(graph: &Graph, cfg: &TrainConfig) -> Result<TrainReport> {
    let adj = normalize(&graph.adjacency, NormMode::Symmetric, true)?;
    Ok(train(GcnModel::for_graph(graph, cfg), graph, &adj, cfg)?.0)
}

/// GCN on a learned structure, through the same operator the learner uses.
pub fn train_on_structure(graph: &Graph, s: &WeightedAdjacency, cfg: &TrainConfig) -> Result<TrainReport> {
    let op = structure_operator(s)?;
    Ok(train(GcnModel::for_graph(graph, cfg), graph, &op, cfg)?.0)
}

fn base_stage(cfg: &RunConfig, graph: &Graph, tc: &TrainConfig) -> Result<BaseStage> {
    Ok(run_base(graph, &cfg.gsl, tc, &cfg.pipeline)?)
}

/// Execute `spec` with master seed `seed`. Re-executing a record's spec and
/// seed reproduces it.
pub fn execute(spec: &RunSpec, seed: u64, label: &str) -> Result<RunOutcome> {
    let cfg = &spec.config;
    let graph = cfg.build_graph(seed)?;
    let tc = cfg.train_for(seed);
    match spec.mode {
        RunMode::Gcn => {
            let report = train_plain_gcn(&graph, &tc)?;
            let secs = report.wall_clock_secs;
            Ok(RunOutcome::new(spec, seed, label, report, vec![secs]))
        }
        RunMode::Base => Ok(RunOutcome::from_base(spec, seed, label, base_stage(cfg, &graph, &tc)?)),
        RunMode::Pipeline { variant } => {
            let base = base_stage(cfg, &graph, &tc)?;
            let out = retrain(&graph, &base, &cfg.gsl, &cfg.ungsl, &tc, variant)?;
            Ok(RunOutcome::from_pipeline(spec, seed, label, out))
        }
        RunMode::Prune { ratio, guided } => {
            let base = base_stage(cfg, &graph, &tc)?;
            prune_run(spec, seed, label, &graph, &tc, &base, ratio, guided)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn prune_run(
    spec: &RunSpec,
    seed: u64,
    label: &str,
    graph: &Graph,
    tc: &TrainConfig,
    base: &BaseStage,
    ratio: f64,
    guided: bool,
) -> Result<RunOutcome> {
    let pruned = if guided {
        prune_by_entropy(&base.structure, base.uncertainty.entropy(), ratio)?
    } else {
        let mut rng = ungsl_core::seed::stream(seed, &format!("prune-random-{ratio}"));
        prune_random(&base.structure, ratio, &mut rng)?
    };
    let report = train_on_structure(graph, &pruned, tc)?;
    let secs = vec![base.stage_secs[0], base.stage_secs[1], report.wall_clock_secs];
    let mut o = RunOutcome::new(spec, seed, label, report, secs);
    o.structure = Some(pruned);
    o.uncertainty = Some(base.uncertainty.clone());
    Ok(o)
}

/// Map `f` over seeds on a pool of `jobs` threads. Results keep seed order.
pub fn for_seeds<T, F>(seeds: &[u64], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if jobs <= 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

/// One run of `mode` per configured seed.
pub fn run_seeds(cfg: &RunConfig, protocol: &str, mode: RunMode, label: &str, jobs: usize) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    let spec = RunSpec::new(protocol, mode, cfg);
    for_seeds(&cfg.seeds, jobs, |seed| execute(&spec, seed, label))
}

/// Re-training variants that share one base run per seed. Outcomes are
/// ordered by seed, then by variant.
pub fn compare_variants(
    cfg: &RunConfig,
    protocol: &str,
    variants: &[(&str, Variant)],
    jobs: usize,
) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    let specs: Vec<RunSpec> = variants
        .iter()
        .map(|&(_, variant)| RunSpec::new(protocol, RunMode::Pipeline { variant }, cfg))
        .collect();
    let per_seed = for_seeds(&cfg.seeds, jobs, |seed| {
        let graph = cfg.build_graph(seed)?;
        let tc = cfg.train_for(seed);
        let base = base_stage(cfg, &graph, &tc)?;
        variants
            .iter()
            .zip(&specs)
            .map(|(&(label, variant), spec)| {
                let out = retrain(&graph, &base, &cfg.gsl, &cfg.ungsl, &tc, variant)?;
                Ok(RunOutcome::from_pipeline(spec, seed, label, out))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Learnable thresholds against thresholds pinned to the per-node confidence
/// quantile at `fraction`.
pub fn ablation_fixed_epsilon(cfg: &RunConfig, fraction: f64, jobs: usize) -> Result<Vec<RunOutcome>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(HarnessError::Config(format!("fixed fraction {fraction} outside [0, 1]")));
    }
    compare_variants(
        cfg,
        "ablation_fixed_epsilon",
        &[("learnable", Variant::Learnable), ("fixed", Variant::FixedFraction(fraction))],
        jobs,
    )
}

/// Asymmetric reweighted structure against the same structure symmetrized
/// every epoch before normalization.
pub fn ablation_symmetrize(cfg: &RunConfig, jobs: usize) -> Result<Vec<RunOutcome>> {
    compare_variants(
        cfg,
        "ablation_symmetrize",
        &[("asymmetric", Variant::Learnable), ("symmetrized", Variant::Symmetrized)],
        jobs,
    )
}

fn kind_name(kind: NoiseKind) -> &'static str {
    match kind {
        NoiseKind::EdgeAdd => "edge_add",
        NoiseKind::EdgeDelete => "edge_delete",
        NoiseKind::FeatureMask => "feature_mask",
        NoiseKind::LabelFlip => "label_flip",
    }
}

fn with_level(cfg: &RunConfig, kind: NoiseKind, level: f64) -> RunConfig {
    let mut cfg = cfg.clone();
    cfg.noise.push(NoiseSpec::new(kind, level, 0));
    cfg
}

/// Full pipeline at each noise level. The level's noise is applied after any
/// noise already in the configuration.
pub fn robustness(cfg: &RunConfig, kind: NoiseKind, levels: &[f64], jobs: usize) -> Result<Vec<RunOutcome>> {
    let mode = RunMode::Pipeline {
        variant: cfg.pipeline.variant,
    };
    let mut all = Vec::new();
    for &level in levels {
        let label = format!("{}={level}", kind_name(kind));
        all.extend(run_seeds(&with_level(cfg, kind, level), "robustness", mode, &label, jobs)?);
    }
    Ok(all)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Beta,
    Tau,
    /// Level of the configured `experiment.noise_kind`.
    Level,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Tau => "tau",
            SweepParam::Level => "level",
        }
    }

    /// Grid used when the configuration gives no values.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::Beta => vec![0.0, 0.1, 0.3, 0.5, 0.7, 1.0],
            SweepParam::Tau => vec![1.0, 2.0, 3.0],
            SweepParam::Level => vec![0.0, 0.2, 0.4, 0.6],
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beta" | "β" => Ok(SweepParam::Beta),
            "tau" | "τ" => Ok(SweepParam::Tau),
            "level" => Ok(SweepParam::Level),
            other => Err(HarnessError::Config(format!(
                "unknown sweep parameter `{other}` (expected beta, tau or level)"
            ))),
        }
    }
}

/// One full pipeline per value per seed.
pub fn sweep(cfg: &RunConfig, param: SweepParam, values: &[f64], jobs: usize) -> Result<Vec<RunOutcome>> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    let mode = RunMode::Pipeline {
        variant: cfg.pipeline.variant,
    };
    let mut all = Vec::new();
    for &v in values {
        let point = match param {
            SweepParam::Beta => {
                let mut c = cfg.clone();
                c.ungsl.beta = v;
                c
            }
            SweepParam::Tau => {
                let mut c = cfg.clone();
                c.ungsl.tau = v;
                c
            }
            SweepParam::Level => with_level(cfg, cfg.experiment.noise_kind, v),
        };
        all.extend(run_seeds(&point, "sweep", mode, &format!("{param}={v}"), jobs)?);
    }
    Ok(all)
}

/// Per-ratio accuracy of GCN on entropy-guided and randomly pruned structures.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneCurve {
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// `guided[r][s]`: test accuracy at ratio index `r`, seed index `s`.
    pub guided: Vec<Vec<f64>>,
    pub random: Vec<Vec<f64>>,
}

impl PruneCurve {
    pub fn guided_mean(&self) -> Vec<f64> {
        self.guided.iter().map(|v| crate::report::mean(v)).collect()
    }

    pub fn random_mean(&self) -> Vec<f64> {
        self.random.iter().map(|v| crate::report::mean(v)).collect()
    }

    /// Mean over seeds of (guided − random) at ratio index `r`.
    pub fn paired_difference(&self, r: usize) -> f64 {
        let d: Vec<f64> = self.guided[r].iter().zip(&self.random[r]).map(|(g, x)| g - x).collect();
        crate::report::mean(&d)
    }

    /// `ratio,guided_mean,guided_std,random_mean,random_std`
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use crate::report::{mean, sample_std};
        let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
        w.write_record(["ratio", "guided_mean", "guided_std", "random_mean", "random_std"])
            .map_err(|e| HarnessError::csv(path, e))?;
        for (i, r) in self.ratios.iter().enumerate() {
            let row = [
                *r,
                mean(&self.guided[i]),
                sample_std(&self.guided[i]),
                mean(&self.random[i]),
                sample_std(&self.random[i]),
            ];
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| HarnessError::csv(path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))
    }
}

/// Train the base learner once per seed, then for every ratio train a GCN
/// on the structure with the highest-entropy in-neighbors removed and on one
/// with a random selection removed.
pub fn prune_experiment(cfg: &RunConfig, ratios: &[f64], jobs: usize) -> Result<(PruneCurve, Vec<RunOutcome>)> {
    cfg.validate()?;
    if let Some(r) = ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(HarnessError::Config(format!("prune ratio {r} outside [0, 1)")));
    }
    let per_seed = for_seeds(&cfg.seeds, jobs, |seed| {
        let graph = cfg.build_graph(seed)?;
        let tc = cfg.train_for(seed);
        let base = base_stage(cfg, &graph, &tc)?;
        let mut outs = Vec::with_capacity(2 * ratios.len());
        for &ratio in ratios {
            for guided in [true, false] {
                let spec = RunSpec::new("prune", RunMode::Prune { ratio, guided }, cfg);
                let label = format!("{}@{ratio}", if guided { "entropy" } else { "random" });
                outs.push(prune_run(&spec, seed, &label, &graph, &tc, &base, ratio, guided)?);
            }
        }
        Ok(outs)
    })?;
    let mut curve = PruneCurve {
        ratios: ratios.to_vec(),
        seeds: cfg.seeds.clone(),
        guided: vec![Vec::new(); ratios.len()],
        random: vec![Vec::new(); ratios.len()],
    };
    for outs in &per_seed {
        for (k, o) in outs.iter().enumerate() {
            let slot = if k % 2 == 0 { &mut curve.guided } else { &mut curve.random };
            slot[k / 2].push(o.record.base.test_acc);
        }
    }
    Ok((curve, per_seed.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DatasetConfig;
    use crate::sbm::SbmConfig;

    pub(crate) fn small_config() -> RunConfig {
        let mut cfg = RunConfig {
            seeds: vec![0, 1],
            dataset: DatasetConfig {
                sbm: Some(SbmConfig {
                    n: 90,
                    classes: 3,
                    p_in: 0.15,
                    p_out: 0.02,
                    dim: 8,
                    signal: 1.5,
                    seed: 0,
                }),
                per_seed: true,
                path: None,
            },
            ..Default::default()
        };
        cfg.train.epochs = 15;
        cfg.train.hidden = 8;
        cfg.gsl.k = 4;
        cfg.gsl.encoder_width = 8;
        cfg
    }

    #[test]
    fn sweep_param_parses() {
        assert_eq!("TAU".parse::<SweepParam>().unwrap(), SweepParam::Tau);
        assert_eq!("β".parse::<SweepParam>().unwrap(), SweepParam::Beta);
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn execute_is_deterministic_and_replayable() {
        let cfg = small_config();
        let spec = RunSpec::new("train", RunMode::Pipeline { variant: Variant::Learnable }, &cfg);
        let a = execute(&spec, 1, "x").unwrap();
        let b = execute(&a.record.spec, a.record.seed, "x").unwrap();
        assert!(a.record.reproduced_by(&b.record));
        assert!(a.record.enhanced.is_some());
        assert_eq!(a.record.stage_secs.len(), 4);
    }

    #[test]
    fn shared_base_matches_independent_runs() {
        let cfg = small_config();
        let outs = compare_variants(&cfg, "cmp", &[("a", Variant::Learnable), ("d", Variant::Detached)], 1).unwrap();
        assert_eq!(outs.len(), 4);
        assert_eq!(outs.iter().map(|o| o.record.seed).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
        for o in &outs {
            let again = execute(&o.record.spec, o.record.seed, &o.record.label).unwrap();
            assert!(o.record.reproduced_by(&again.record));
        }
        // detached re-training repeats the base run
        let d = &outs[1].record;
        assert!(d.base.same_outcome(d.enhanced.as_ref().unwrap()));
    }

    #[test]
    fn parallel_runs_keep_order_and_values() {
        let cfg = small_config();
        let serial = run_seeds(&cfg, "train", RunMode::Base, "b", 1).unwrap();
        let parallel = run_seeds(&cfg, "train", RunMode::Base, "b", 2).unwrap();
        for (s, p) in serial.iter().zip(&parallel) {
            assert!(s.record.reproduced_by(&p.record));
        }
    }

    #[test]
    fn zero_ratio_prune_equals_direct_training() {
        let cfg = small_config();
        let (curve, outs) = prune_experiment(&cfg, &[0.0, 0.3], 1).unwrap();
        assert_eq!(curve.guided[0], curve.random[0]);
        assert_eq!(outs.len(), 2 * 2 * 2);
        let graph = cfg.build_graph(0).unwrap();
        let tc = cfg.train_for(0);
        let base = run_base(&graph, &cfg.gsl, &tc, &cfg.pipeline).unwrap();
        let direct = train_on_structure(&graph, &base.structure, &tc).unwrap();
        assert_eq!(direct.test_acc, curve.guided[0][0]);
        assert!(prune_experiment(&cfg, &[1.0], 1).is_err());
    }

    #[test]
    fn robustness_and_sweep_label_their_points() {
        let mut cfg = small_config();
        cfg.seeds = vec![0];
        let outs = robustness(&cfg, NoiseKind::EdgeAdd, &[0.0, 0.2], 1).unwrap();
        assert_eq!(outs[0].record.label, "edge_add=0");
        assert_ne!(outs[0].record.fingerprint, outs[1].record.fingerprint);
        // level 0 leaves the graph alone, so the accuracies match a plain run
        let plain = run_seeds(&cfg, "train", RunMode::Pipeline { variant: Variant::Learnable }, "p", 1).unwrap();
        let plain_enhanced = plain[0].record.enhanced.as_ref().unwrap();
        assert!(plain_enhanced.same_outcome(outs[0].record.enhanced.as_ref().unwrap()));
        let single = sweep(&cfg, SweepParam::Tau, &[2.0], 1).unwrap();
        assert!(single[0].record.enhanced.as_ref().unwrap().same_outcome(plain_enhanced));
        assert!(sweep(&cfg, SweepParam::Beta, &[], 1).is_err());
    }

    #[test]
    fn fixed_fraction_is_range_checked() {
        assert!(ablation_fixed_epsilon(&small_config(), 1.5, 1).is_err());
    }
}
