//! Confidence-thresholded edge reweighting that plugs into a structure
//! learner, and the train / estimate / re-train pipeline around it.

mod pipeline;
mod reweight;
mod threshold;

pub use pipeline::{pipeline, retrain, run_base, BaseStage, PipelineOptions, PipelineOutput, Variant};
pub use reweight::{psi, reweight, reweight_backward, RefinedAdjacency, ReweightGrads, ThresholdVector, UnGslConfig};
pub use threshold::{quantile_thresholds, ThresholdMode};
