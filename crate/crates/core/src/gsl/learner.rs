use crate::error::{Error, Result};
use crate::gnn::{add_weight_decay, cross_entropy, fit, Fit, GcnModel, TrainConfig, TrainReport};
use crate::graph::{
    combine, normalize, normalize_traced, symmetrize_traced, CombineTrace, Graph, NormMode, Normalization,
    SymmetrizeTrace, WeightedAdjacency,
};
use crate::numerics::{AdamConfig, AdamState, DenseMatrix, ParamTensor};
use crate::plugin::{reweight, reweight_backward, RefinedAdjacency, ThresholdMode, ThresholdVector, UnGslConfig};
use crate::seed::{self, Rng};
use crate::uncertainty::{NodePredictor, UncertaintyVector};

use super::config::{GslConfig, GslMethod};
use super::knn::{knn_graph, KnnTrace, ScoreTransform};
use super::regularize::regularize;

/// Reweighting state once UnGSL is attached.
#[derive(Debug, Clone)]
struct Attached {
    cfg: UnGslConfig,
    uncertainty: UncertaintyVector,
    mode: ThresholdMode,
}

/// Embedding-based structure learner: a linear GCN encoder produces node
/// embeddings, their kNN graph is symmetrized, degree-normalized and mixed with
/// the input graph, and a two-layer GCN classifies on the row-normalized result.
#[derive(Debug, Clone)]
pub struct StructureLearner {
    config: GslConfig,
    /// Symmetric-normalized input graph with self-loops.
    base: WeightedAdjacency,
    /// `Â X`, fixed for the lifetime of the learner.
    ax: DenseMatrix,
    encoder: ParamTensor,
    gcn: GcnModel,
    plugin: Option<Attached>,
    symmetrize_refined: bool,
    trained: bool,
}

/// Everything produced by one structure build, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BuiltStructure {
    embeddings: DenseMatrix,
    knn_raw: WeightedAdjacency,
    knn_trace: KnnTrace,
    knn_sym: SymmetrizeTrace,
    knn_norm: (WeightedAdjacency, Normalization),
    s: WeightedAdjacency,
    mix: CombineTrace,
    refined: Option<RefinedAdjacency>,
    sym_refined: Option<(WeightedAdjacency, SymmetrizeTrace)>,
    op: WeightedAdjacency,
    norm: Normalization,
}

impl BuiltStructure {
    /// The structure before any reweighting.
    pub fn base_structure(&self) -> &WeightedAdjacency {
        &self.s
    }

    /// The structure handed to normalization: `S`, `Ŝ`, or symmetrized `Ŝ`.
    pub fn structure(&self) -> &WeightedAdjacency {
        if let Some((m, _)) = &self.sym_refined {
            return m;
        }
        match &self.refined {
            Some(r) => r.matrix(),
            None => &self.s,
        }
    }

    pub fn refined(&self) -> Option<&RefinedAdjacency> {
        self.refined.as_ref()
    }

    /// Row-normalized operator the classifier consumes.
    pub fn operator(&self) -> &WeightedAdjacency {
        &self.op
    }

    pub fn embeddings(&self) -> &DenseMatrix {
        &self.embeddings
    }
}

/// Gradients of the training objective with respect to every learnable tensor.
#[derive(Debug, Clone)]
pub struct LearnerGrads {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    pub encoder: DenseMatrix,
    pub eps: Option<Vec<f64>>,
}

pub type LearnerSnapshot = (ParamTensor, GcnModel, Option<ThresholdVector>);

impl StructureLearner {
    /// Fresh learner for `graph`. The classifier is initialized exactly like
    /// [`GcnModel::for_graph`]; the encoder draws from its own stream.
    pub fn new(graph: &Graph, config: GslConfig, cfg: &TrainConfig) -> Result<Self> {
        config.validate()?;
        graph.validate()?;
        if config.k >= graph.n() {
            return Err(Error::InvalidInput(format!("k = {} must be smaller than n = {}", config.k, graph.n())));
        }
        let base = normalize(&graph.adjacency, NormMode::Symmetric, true)?;
        let ax = base.matrix().spmm(&graph.features)?;
        let mut rng = seed::stream(cfg.seed, "encoder-init");
        let encoder = ParamTensor::new(
            "gsl.encoder",
            DenseMatrix::glorot(graph.feature_dim(), config.encoder_width, &mut rng),
        );
        Ok(Self {
            config,
            base,
            ax,
            encoder,
            gcn: GcnModel::for_graph(graph, cfg),
            plugin: None,
            symmetrize_refined: false,
            trained: false,
        })
    }

    pub fn config(&self) -> &GslConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// Normalized input graph `Â` the learner mixes with.
    pub fn input_graph(&self) -> &WeightedAdjacency {
        &self.base
    }

    pub fn encoder(&self) -> &ParamTensor {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut ParamTensor {
        &mut self.encoder
    }

    pub fn classifier(&self) -> &GcnModel {
        &self.gcn
    }

    pub fn classifier_mut(&mut self) -> &mut GcnModel {
        &mut self.gcn
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn is_attached(&self) -> bool {
        self.plugin.is_some()
    }

    /// Attach confidence-based reweighting with learnable thresholds drawn
    /// uniformly from `[0, 1]` on the `ungsl-eps-init` stream of `master_seed`.
    pub fn attach(&mut self, u: UncertaintyVector, cfg: UnGslConfig, master_seed: u64) -> Result<()> {
        let mut rng = seed::stream(master_seed, "ungsl-eps-init");
        let eps = ThresholdVector::init(self.n(), &mut rng);
        self.attach_with(u, cfg, ThresholdMode::Learnable(eps))
    }

    pub fn attach_with(&mut self, u: UncertaintyVector, cfg: UnGslConfig, mode: ThresholdMode) -> Result<()> {
        if self.plugin.is_some() {
            return Err(Error::AlreadyAttached);
        }
        cfg.validate()?;
        mode.validate(self.n())?;
        if u.len() != self.n() {
            return Err(Error::dims("attach", self.n(), u.len()));
        }
        self.plugin = Some(Attached { cfg, uncertainty: u, mode });
        Ok(())
    }

    /// Symmetrize the reweighted structure before normalization.
    pub fn set_symmetrize_refined(&mut self, on: bool) {
        self.symmetrize_refined = on;
    }

    pub fn threshold_mode(&self) -> Option<&ThresholdMode> {
        self.plugin.as_ref().map(|p| &p.mode)
    }

    pub fn threshold_mode_mut(&mut self) -> Option<&mut ThresholdMode> {
        self.plugin.as_mut().map(|p| &mut p.mode)
    }

    /// Build the current structure from the live encoder.
    pub fn build(&self) -> Result<BuiltStructure> {
        let cfg = &self.config;
        let embeddings = self.ax.matmul(&self.encoder.value)?;
        let transform = match cfg.method {
            GslMethod::SimilarityResidual => ScoreTransform::Sigmoid,
            GslMethod::MetricKnn => ScoreTransform::Clamp,
        };
        let (knn_raw, knn_trace) = knn_graph(&embeddings, cfg.k, cfg.similarity(), transform)?;
        let (knn, knn_sym) = symmetrize_traced(&knn_raw);
        // put the kNN graph on the same scale as the normalized input graph
        let knn_norm = normalize_traced(&knn, NormMode::Symmetric, true)?;
        let (wk, wa) = cfg.mixing();
        let (s, mix) = combine(&knn_norm.0, wk, &self.base, wa)?;
        let refined = match &self.plugin {
            Some(p) => {
                let eps = p.mode.thresholds(&s, &p.uncertainty)?;
                Some(reweight(&s, &p.uncertainty, &eps, &p.cfg)?)
            }
            None => None,
        };
        let sym_refined = match (&refined, self.symmetrize_refined) {
            (Some(r), true) => Some(symmetrize_traced(r.matrix())),
            _ => None,
        };
        let used = match (&sym_refined, &refined) {
            (Some((m, _)), _) => m,
            (None, Some(r)) => r.matrix(),
            (None, None) => &s,
        };
        let (op, norm) = normalize_traced(used, NormMode::Row, false)?;
        Ok(BuiltStructure {
            embeddings,
            knn_raw,
            knn_trace,
            knn_sym,
            knn_norm,
            s,
            mix,
            refined,
            sym_refined,
            op,
            norm,
        })
    }

    /// Current learned structure (`Ŝ` when reweighting is attached).
    pub fn build_structure(&self) -> Result<WeightedAdjacency> {
        Ok(self.build()?.structure().clone())
    }

    /// Final structure of a trained learner.
    pub fn export_structure(&self) -> Result<WeightedAdjacency> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        self.build_structure()
    }

    /// Learned thresholds in effect for the current structure, if attached.
    pub fn current_thresholds(&self) -> Result<Option<Vec<f64>>> {
        match &self.plugin {
            None => Ok(None),
            Some(p) => {
                let built = self.build()?;
                p.mode.thresholds(built.base_structure(), &p.uncertainty).map(Some)
            }
        }
    }

    fn check_graph(&self, graph: &Graph) -> Result<()> {
        if graph.n() != self.n() || graph.feature_dim() != self.encoder.value.rows() {
            return Err(Error::dims(
                "structure learner",
                format!("{} nodes, {} features", self.n(), self.encoder.value.rows()),
                format!("{} nodes, {} features", graph.n(), graph.feature_dim()),
            ));
        }
        Ok(())
    }

    fn structure_is_learnable(&self) -> bool {
        self.config.mixing().0 != 0.0
            || matches!(self.plugin, Some(Attached { mode: ThresholdMode::Learnable(_), .. }))
    }

    /// Training objective `CE + λ·penalty` on `idx` and its gradients. Dropout
    /// is applied only when `rng` is given.
    pub fn objective(
        &self,
        graph: &Graph,
        built: &BuiltStructure,
        idx: &[usize],
        rng: Option<&mut Rng>,
    ) -> Result<(f64, LearnerGrads)> {
        let x = &graph.features;
        let (logits, cache) = self.gcn.forward(&built.op, x, rng)?;
        let (mut loss, d_logits) = cross_entropy(&logits, &graph.labels, idx)?;
        let learnable = self.structure_is_learnable();
        let g = self.gcn.backward(&cache, &built.op, x, &d_logits, learnable)?;
        let lambda = self.config.lambda;
        let penalty = if lambda > 0.0 {
            let p = regularize(built.structure(), x, &self.config.regularizers)?;
            loss += lambda * p.value;
            Some(p.grad)
        } else {
            None
        };
        let mut grads = LearnerGrads {
            w1: g.w1,
            w2: g.w2,
            encoder: DenseMatrix::zeros(self.encoder.value.rows(), self.encoder.value.cols()),
            eps: None,
        };
        if !learnable {
            return Ok((loss, grads));
        }
        let d_op = g.adj.expect("adjacency gradient requested");
        let mut d_used = built.norm.backward(&built.op, &d_op)?;
        if let Some(pg) = penalty {
            for (d, p) in d_used.iter_mut().zip(pg) {
                *d += lambda * p;
            }
        }
        let d_s = match &built.refined {
            Some(r) => {
                let d_hat = match &built.sym_refined {
                    Some((_, t)) => t.backward(&d_used)?,
                    None => d_used,
                };
                let d_hat = r.matrix().matrix().with_values(d_hat)?;
                let rg = reweight_backward(r, &d_hat)?;
                if let Some(Attached { mode: ThresholdMode::Learnable(_), .. }) = &self.plugin {
                    grads.eps = Some(rg.eps);
                }
                rg.base
            }
            None => d_used,
        };
        let d_knn_norm = built.mix.backward_a(&d_s);
        let (knn_op, knn_norm) = &built.knn_norm;
        let d_knn = knn_norm.backward(knn_op, &d_knn_norm)?;
        let d_raw = built.knn_sym.backward(&d_knn)?;
        let d_e = built.knn_trace.backward(&built.knn_raw, &built.embeddings, &d_raw)?;
        grads.encoder = self.ax.matmul_tn(&d_e)?;
        Ok((loss, grads))
    }

    pub fn snapshot(&self) -> LearnerSnapshot {
        let eps = match &self.plugin {
            Some(Attached { mode: ThresholdMode::Learnable(t), .. }) => Some(t.clone()),
            _ => None,
        };
        (self.encoder.clone(), self.gcn.clone(), eps)
    }

    pub fn restore(&mut self, (encoder, gcn, eps): LearnerSnapshot) {
        self.encoder = encoder;
        self.gcn = gcn;
        if let (Some(t), Some(Attached { mode: ThresholdMode::Learnable(cur), .. })) = (eps, self.plugin.as_mut()) {
            *cur = t;
        }
    }

    /// First-layer pre-activations of the classifier on `adj`.
    pub fn node_representations(&self, adj: &WeightedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
        let op = structure_operator(adj)?;
        op.matrix().spmm(&x.matmul(&self.gcn.w1.value)?)
    }
}

/// Row-normalized propagation operator of a learned structure. Learned
/// structures already carry their self-loops, so none are added.
pub fn structure_operator(s: &WeightedAdjacency) -> Result<WeightedAdjacency> {
    normalize(s, NormMode::Row, false)
}

struct GslFit<'a> {
    learner: &'a mut StructureLearner,
    graph: &'a Graph,
    train: Vec<usize>,
    adam: AdamState,
    eps_adam: Option<AdamState>,
    rng: Rng,
    weight_decay: f64,
    cache: Option<BuiltStructure>,
}

impl Fit for GslFit<'_> {
    type Snapshot = LearnerSnapshot;

    fn train_step(&mut self, _epoch: usize) -> Result<f64> {
        let built = match self.cache.take() {
            Some(b) => b,
            None => self.learner.build()?,
        };
        let (loss, g) = self.learner.objective(self.graph, &built, &self.train, Some(&mut self.rng))?;
        let l = &mut *self.learner;
        l.gcn.w1.grad = g.w1;
        l.gcn.w2.grad = g.w2;
        l.encoder.grad = g.encoder;
        for p in l.gcn.params_mut() {
            add_weight_decay(p, self.weight_decay);
        }
        add_weight_decay(&mut l.encoder, self.weight_decay);
        {
            let [w1, w2] = l.gcn.params_mut();
            self.adam.step(&mut [w1, w2, &mut l.encoder])?;
        }
        if let (Some(adam), Some(eps)) = (self.eps_adam.as_mut(), g.eps) {
            if let Some(Attached { mode: ThresholdMode::Learnable(t), .. }) = l.plugin.as_mut() {
                t.param.grad = DenseMatrix::new(eps.len(), 1, eps)?;
                adam.step(&mut [&mut t.param])?;
            }
        }
        Ok(loss)
    }

    fn eval_logits(&mut self) -> Result<DenseMatrix> {
        let built = self.learner.build()?;
        let logits = self.learner.gcn.predict(&built.op, &self.graph.features)?;
        self.cache = Some(built);
        Ok(logits)
    }

    fn snapshot(&self) -> LearnerSnapshot {
        self.learner.snapshot()
    }

    fn restore(&mut self, snapshot: LearnerSnapshot) {
        self.learner.restore(snapshot);
        self.cache = None;
    }
}

/// Jointly train the encoder, the classifier and (when attached and
/// learnable) the thresholds, with early stopping on validation accuracy.
/// Dropout draws come from the same stream as plain GCN training.
pub fn train_gsl(learner: &mut StructureLearner, graph: &Graph, cfg: &TrainConfig) -> Result<TrainReport> {
    graph.require_supervision()?;
    learner.check_graph(graph)?;
    let eps_adam = match &learner.plugin {
        Some(Attached { mode: ThresholdMode::Learnable(_), cfg: ucfg, .. }) => {
            Some(AdamState::new(AdamConfig::with_lr(ucfg.eps_lr)))
        }
        _ => None,
    };
    let mut state = GslFit {
        train: graph.masks.train_idx(),
        adam: AdamState::new(cfg.adam()),
        eps_adam,
        rng: seed::stream(cfg.seed, "dropout"),
        weight_decay: cfg.weight_decay,
        cache: None,
        graph,
        learner,
    };
    let report = fit(&mut state, &graph.labels, &graph.masks, cfg)?;
    state.learner.trained = true;
    Ok(report)
}

impl NodePredictor for StructureLearner {
    fn predict_logits(&self, graph: &Graph) -> Result<DenseMatrix> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        self.check_graph(graph)?;
        let built = self.build()?;
        self.gcn.predict(&built.op, &graph.features)
    }
}
