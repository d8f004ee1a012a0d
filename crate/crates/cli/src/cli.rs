use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

/// Uncertainty-aware graph structure learning: training, verification,
/// experiments and reports.
///
/// Exit codes: 0 success, 1 other failure, 2 configuration or input error,
/// 3 training divergence, 4 violated bound.
#[derive(Debug, Parser)]
#[command(name = "ungsl", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline (or the base learner alone) once per configured seed.
    Train(TrainArgs),
    /// Randomized checks of the entropy bound, the log-sum lemma and the
    /// entropy correlation.
    Verify(VerifyArgs),
    /// Run one comparison protocol.
    Experiment(ExperimentArgs),
    /// Summarize a runs.jsonl file as mean ± std per configuration.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Output directory.
    #[arg(long, env = "UNGSL_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
    /// Seeds run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration.
    pub config: PathBuf,
    /// `off` trains the base learner only.
    #[arg(long, value_enum, default_value = "on")]
    pub ungsl: Switch,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("suite").required(true).multiple(true).args(["prop1", "logsum", "correlation"])))]
pub struct VerifyArgs {
    /// Entropy lower bound and η coefficients on random instances.
    #[arg(long)]
    pub prop1: bool,
    /// Log-sum inequality on random vector pairs.
    #[arg(long)]
    pub logsum: bool,
    /// Correlation of node entropy with neighbor entropy after training a
    /// linear probe on the configured dataset.
    #[arg(long)]
    pub correlation: bool,
    /// Random instances for --prop1.
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    /// Largest graph for --prop1.
    #[arg(long, default_value_t = 50)]
    pub max_nodes: usize,
    /// Largest class count for --prop1.
    #[arg(long, default_value_t = 8)]
    pub max_classes: usize,
    /// Vector pairs for --logsum.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Run configuration for --correlation (default: 500-node SBM).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Probe training epochs for --correlation (overrides the configuration).
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("protocol").required(true).args(["prune", "robustness", "sweep", "ablation", "overhead"])))]
pub struct ExperimentArgs {
    /// TOML run configuration.
    pub config: PathBuf,
    /// Entropy-guided against random neighbor pruning.
    #[arg(long)]
    pub prune: bool,
    /// Pipeline across noise levels.
    #[arg(long)]
    pub robustness: bool,
    /// Pipeline across values of `beta`, `tau` or `level`.
    #[arg(long, value_name = "PARAM")]
    pub sweep: Option<String>,
    /// `fixed-epsilon` or `symmetrize`.
    #[arg(long, value_name = "NAME")]
    pub ablation: Option<String>,
    /// Training-time overhead and reweighting cost against edge count.
    #[arg(long)]
    pub overhead: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run records.
    pub runs: PathBuf,
    /// CSV export (default: report.csv next to the records).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
