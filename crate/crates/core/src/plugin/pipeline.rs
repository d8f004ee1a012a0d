use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{TrainConfig, TrainReport};
use crate::graph::{Graph, WeightedAdjacency};
use crate::gsl::{train_gsl, GslConfig, StructureLearner};
use crate::numerics::DenseMatrix;
use crate::seed;
use crate::uncertainty::{augment, contrastive_uncertainty, pretrain_uncertainty, UncertaintySource, UncertaintyVector};

use super::reweight::UnGslConfig;
use super::threshold::ThresholdMode;

/// How the re-training stage uses the uncertainty estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Variant {
    /// Learnable thresholds, asymmetric structure.
    Learnable,
    /// Non-learnable per-node confidence quantile at the given fraction.
    FixedFraction(f64),
    /// Learnable thresholds, structure symmetrized after reweighting.
    Symmetrized,
    /// No reweighting: re-training repeats the base run.
    Detached,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub variant: Variant,
    pub uncertainty: UncertaintySource,
    /// Contrastive option only: augmentation strengths and temperature.
    pub edge_drop: f64,
    pub feature_mask: f64,
    pub temperature: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Learnable,
            uncertainty: UncertaintySource::Entropy,
            edge_drop: 0.2,
            feature_mask: 0.2,
            temperature: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub base: TrainReport,
    pub enhanced: TrainReport,
    pub uncertainty: UncertaintyVector,
    /// Learned structure of the base run.
    pub base_structure: WeightedAdjacency,
    /// Exported structure of the re-trained run.
    pub structure: WeightedAdjacency,
    /// Thresholds in effect at export time (absent when detached).
    pub thresholds: Option<Vec<f64>>,
    /// `ψ` evaluations made by one structure build of the final learner.
    pub psi_evaluations: usize,
    /// Wall-clock seconds of the four stages.
    pub stage_secs: [f64; 4],
}

/// Output of the first two stages, shared by every re-training variant.
#[derive(Debug, Clone)]
pub struct BaseStage {
    pub report: TrainReport,
    pub structure: WeightedAdjacency,
    pub uncertainty: UncertaintyVector,
    /// Wall-clock seconds of base training and uncertainty estimation.
    pub stage_secs: [f64; 2],
}

/// Stages 1 and 2: train the base learner and freeze its uncertainty.
pub fn run_base(graph: &Graph, gsl: &GslConfig, train: &TrainConfig, opts: &PipelineOptions) -> Result<BaseStage> {
    let t = Instant::now();
    let (report, structure, learner) = (|| {
        let mut learner = StructureLearner::new(graph, gsl.clone(), train)?;
        let report = train_gsl(&mut learner, graph, train)?;
        let s = learner.export_structure()?;
        Ok::<_, Error>((report, s, learner))
    })()
    .map_err(|e| e.in_stage("base training"))?;
    let train_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let uncertainty = estimate_uncertainty(&learner, graph, &structure, train.seed, opts)
        .map_err(|e| e.in_stage("uncertainty estimation"))?;
    Ok(BaseStage {
        report,
        structure,
        uncertainty,
        stage_secs: [train_secs, t.elapsed().as_secs_f64()],
    })
}

/// Stages 3 and 4: re-train from a fresh initialization with reweighting
/// active (per `variant`) and export the final structure.
pub fn retrain(
    graph: &Graph,
    base: &BaseStage,
    gsl: &GslConfig,
    ungsl: &UnGslConfig,
    train: &TrainConfig,
    variant: Variant,
) -> Result<PipelineOutput> {
    let t = Instant::now();
    let mut learner = (|| {
        let mut learner = StructureLearner::new(graph, gsl.clone(), train)?;
        let u = base.uncertainty.clone();
        match variant {
            Variant::Detached => {}
            Variant::Learnable => learner.attach(u, *ungsl, train.seed)?,
            Variant::Symmetrized => {
                learner.attach(u, *ungsl, train.seed)?;
                learner.set_symmetrize_refined(true);
            }
            Variant::FixedFraction(f) => learner.attach_with(u, *ungsl, ThresholdMode::Quantile(f))?,
        }
        Ok::<_, Error>(learner)
    })()
    .map_err(|e| e.in_stage("re-training"))?;
    let enhanced = train_gsl(&mut learner, graph, train).map_err(|e| e.in_stage("re-training"))?;
    let retrain_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (structure, thresholds, psi_evaluations) = (|| {
        let built = learner.build()?;
        let psi = built.refined().map_or(0, |r| r.psi_evaluations());
        Ok::<_, Error>((learner.export_structure()?, learner.current_thresholds()?, psi))
    })()
    .map_err(|e| e.in_stage("export"))?;

    Ok(PipelineOutput {
        base: base.report.clone(),
        enhanced,
        uncertainty: base.uncertainty.clone(),
        base_structure: base.structure.clone(),
        structure,
        thresholds,
        psi_evaluations,
        stage_secs: [base.stage_secs[0], base.stage_secs[1], retrain_secs, t.elapsed().as_secs_f64()],
    })
}

/// Base training, frozen uncertainty, re-training with reweighting from a
/// fresh initialization, export. Every stage derives its randomness from
/// `train.seed`; re-training reuses the base run's streams.
pub fn pipeline(
    graph: &Graph,
    gsl: &GslConfig,
    ungsl: &UnGslConfig,
    train: &TrainConfig,
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    let base = run_base(graph, gsl, train, opts)?;
    retrain(graph, &base, gsl, ungsl, train, opts.variant)
}

fn estimate_uncertainty(
    learner: &StructureLearner,
    graph: &Graph,
    structure: &WeightedAdjacency,
    master: u64,
    opts: &PipelineOptions,
) -> Result<UncertaintyVector> {
    match opts.uncertainty {
        UncertaintySource::Entropy => pretrain_uncertainty(learner, graph),
        UncertaintySource::Contrastive => {
            let mut rng = seed::stream(master, "contrastive-augment");
            let (aug, x_aug) = augment(structure, &graph.features, opts.edge_drop, opts.feature_mask, &mut rng)?;
            let z: DenseMatrix = learner.node_representations(structure, &graph.features)?;
            let z_aug = learner.node_representations(&aug, &x_aug)?;
            contrastive_uncertainty(&z, &z_aug, opts.temperature)
        }
    }
}
