use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::gcn::GcnModel;
use super::loss::{accuracy, cross_entropy};
use super::sgc::SgcModel;
use crate::error::{Error, Result};
use crate::graph::{Graph, SplitMasks, WeightedAdjacency};
use crate::numerics::{AdamConfig, AdamState, DenseMatrix, ParamTensor};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            patience: 100,
            hidden: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be ≥ 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidInput("patience must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput("dropout must lie in [0, 1)".into()));
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::InvalidInput("lr must be > 0 and weight decay ≥ 0".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.lr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub best_val_acc: f64,
    /// Test accuracy at the best-validation epoch.
    pub test_acc: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub loss_series: Vec<f64>,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// Equality of everything except wall-clock time; loss series compared bitwise.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        self.best_val_acc == other.best_val_acc
            && self.test_acc == other.test_acc
            && self.best_epoch == other.best_epoch
            && self.epochs_run == other.epochs_run
            && self.loss_series.len() == other.loss_series.len()
            && self
                .loss_series
                .iter()
                .zip(&other.loss_series)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// A model that can run one optimization step and produce evaluation logits.
/// [`fit`] drives it with early stopping on validation accuracy.
pub trait Fit {
    type Snapshot;

    /// Forward, backward and optimizer update. Returns the training loss.
    fn train_step(&mut self, epoch: usize) -> Result<f64>;

    fn eval_logits(&mut self) -> Result<DenseMatrix>;

    fn snapshot(&self) -> Self::Snapshot;

    fn restore(&mut self, snapshot: Self::Snapshot);
}

/// Train until `cfg.epochs` or until validation accuracy has not improved for
/// `cfg.patience` epochs, then restore the best-validation state. Ties in
/// validation accuracy are broken by lower validation loss.
pub fn fit<F: Fit>(
    model: &mut F,
    labels: &[Option<usize>],
    masks: &SplitMasks,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let val = masks.val_idx();
    let test = masks.test_idx();
    let start = Instant::now();
    let mut loss_series = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, f64, usize, F::Snapshot)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        let loss = model.train_step(epoch)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        loss_series.push(loss);
        let logits = model.eval_logits()?;
        let val_acc = accuracy(&logits, labels, &val);
        let val_loss = if val.is_empty() {
            0.0
        } else {
            cross_entropy(&logits, labels, &val)?.0
        };
        let improved = match &best {
            None => true,
            Some((acc, vl, ..)) => val_acc > *acc || (val_acc == *acc && val_loss < *vl),
        };
        if improved {
            let test_acc = accuracy(&logits, labels, &test);
            best = Some((val_acc, val_loss, test_acc, epoch, model.snapshot()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (best_val_acc, _, test_acc, best_epoch, snap) = best.expect("at least one epoch");
    model.restore(snap);
    Ok(TrainReport {
        best_val_acc,
        test_acc,
        best_epoch,
        epochs_run: loss_series.len(),
        loss_series,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub(crate) fn add_weight_decay(p: &mut ParamTensor, wd: f64) {
    if wd > 0.0 {
        let v = p.value.clone();
        p.grad.add_scaled(&v, wd);
    }
}

impl GcnModel {
    /// Fresh model sized for `graph`, initialized from the `gcn-init` stream of `cfg.seed`.
    pub fn for_graph(graph: &Graph, cfg: &TrainConfig) -> Self {
        let mut rng = seed::stream(cfg.seed, "gcn-init");
        GcnModel::init(graph.feature_dim(), cfg.hidden, graph.num_classes, cfg.dropout, &mut rng)
    }
}

struct GcnFit<'a> {
    model: GcnModel,
    adj: &'a WeightedAdjacency,
    x: &'a DenseMatrix,
    labels: &'a [Option<usize>],
    train: Vec<usize>,
    adam: AdamState,
    rng: Rng,
    weight_decay: f64,
}

impl Fit for GcnFit<'_> {
    type Snapshot = GcnModel;

    fn train_step(&mut self, _epoch: usize) -> Result<f64> {
        self.model.w1.zero_grad();
        self.model.w2.zero_grad();
        let (logits, cache) = self.model.forward(self.adj, self.x, Some(&mut self.rng))?;
        let (loss, d_logits) = cross_entropy(&logits, self.labels, &self.train)?;
        let g = self.model.backward(&cache, self.adj, self.x, &d_logits, false)?;
        self.model.w1.grad = g.w1;
        self.model.w2.grad = g.w2;
        for p in self.model.params_mut() {
            add_weight_decay(p, self.weight_decay);
        }
        self.adam.step(&mut self.model.params_mut())?;
        Ok(loss)
    }

    fn eval_logits(&mut self) -> Result<DenseMatrix> {
        self.model.predict(self.adj, self.x)
    }

    fn snapshot(&self) -> GcnModel {
        self.model.clone()
    }

    fn restore(&mut self, snapshot: GcnModel) {
        self.model = snapshot;
    }
}

/// Train a GCN on a fixed, already-normalized adjacency. Deterministic given
/// `cfg.seed` (dropout draws come from the `dropout` stream).
pub fn train(
    model: GcnModel,
    graph: &Graph,
    adj: &WeightedAdjacency,
    cfg: &TrainConfig,
) -> Result<(TrainReport, GcnModel)> {
    graph.require_supervision()?;
    if adj.n() != graph.n() {
        return Err(Error::dims("train", graph.n(), adj.n()));
    }
    let mut state = GcnFit {
        model,
        adj,
        x: &graph.features,
        labels: &graph.labels,
        train: graph.masks.train_idx(),
        adam: AdamState::new(cfg.adam()),
        rng: seed::stream(cfg.seed, "dropout"),
        weight_decay: cfg.weight_decay,
    };
    let report = fit(&mut state, &graph.labels, &graph.masks, cfg)?;
    Ok((report, state.model))
}

struct SgcFit<'a> {
    model: SgcModel,
    propagated: DenseMatrix,
    labels: &'a [Option<usize>],
    train: Vec<usize>,
    adam: AdamState,
    weight_decay: f64,
}

impl Fit for SgcFit<'_> {
    type Snapshot = SgcModel;

    fn train_step(&mut self, _epoch: usize) -> Result<f64> {
        self.model.w.zero_grad();
        let logits = self.model.logits(&self.propagated)?;
        let (loss, d_logits) = cross_entropy(&logits, self.labels, &self.train)?;
        self.model.w.grad = self.model.backward(&self.propagated, &d_logits)?;
        add_weight_decay(&mut self.model.w, self.weight_decay);
        self.adam.step(&mut [&mut self.model.w])?;
        Ok(loss)
    }

    fn eval_logits(&mut self) -> Result<DenseMatrix> {
        self.model.logits(&self.propagated)
    }

    fn snapshot(&self) -> SgcModel {
        self.model.clone()
    }

    fn restore(&mut self, snapshot: SgcModel) {
        self.model = snapshot;
    }
}

/// Train an SGC classifier. The propagation `Â^k X` is computed once.
pub fn train_sgc(
    model: SgcModel,
    graph: &Graph,
    adj: &WeightedAdjacency,
    cfg: &TrainConfig,
) -> Result<(TrainReport, SgcModel)> {
    graph.require_supervision()?;
    let propagated = model.propagate(adj, &graph.features)?;
    let mut state = SgcFit {
        model,
        propagated,
        labels: &graph.labels,
        train: graph.masks.train_idx(),
        adam: AdamState::new(cfg.adam()),
        weight_decay: cfg.weight_decay,
    };
    let report = fit(&mut state, &graph.labels, &graph.masks, cfg)?;
    Ok((report, state.model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize, NormMode};

    fn graph() -> Graph {
        let mut rng = seed::stream(5, "train-test");
        let n = 30;
        let mut edges = Vec::new();
        for i in 0..n {
            edges.push((i, (i + 1) % n, 1.0));
            edges.push((i, (i + 3) % n, 1.0));
        }
        let adj = WeightedAdjacency::from_undirected(n, edges).unwrap();
        let labels: Vec<Option<usize>> = (0..n).map(|i| Some(i % 3)).collect();
        let mut x = DenseMatrix::random_normal(n, 4, 1.0, &mut rng);
        for i in 0..n {
            x.set(i, i % 3, x.get(i, i % 3) + 2.0);
        }
        let idx: Vec<usize> = (0..n).collect();
        let masks = SplitMasks::from_indices(n, &idx[..12], &idx[12..20], &idx[20..]).unwrap();
        Graph::new(adj, x, labels, masks).unwrap()
    }

    fn cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 40,
            hidden: 8,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_outcome() {
        let g = graph();
        let adj = normalize(&g.adjacency, NormMode::Symmetric, true).unwrap();
        let run = |s| train(GcnModel::for_graph(&g, &cfg(s)), &g, &adj, &cfg(s)).unwrap();
        let (a, ma) = run(7);
        let (b, mb) = run(7);
        assert!(a.same_outcome(&b));
        assert_eq!(ma, mb);
        let (c, _) = run(8);
        assert!(!a.same_outcome(&c));
    }

    #[test]
    fn report_is_consistent() {
        let g = graph();
        let adj = normalize(&g.adjacency, NormMode::Symmetric, true).unwrap();
        let (r, _) = train(GcnModel::for_graph(&g, &cfg(0)), &g, &adj, &cfg(0)).unwrap();
        assert_eq!(r.loss_series.len(), r.epochs_run);
        assert!(r.best_epoch < r.epochs_run && r.epochs_run <= 40);
        assert!(r.loss_series.last().unwrap() < &r.loss_series[0]);
        assert!((0.0..=1.0).contains(&r.test_acc));
    }

    #[test]
    fn patience_stops_early() {
        let g = graph();
        let adj = normalize(&g.adjacency, NormMode::Symmetric, true).unwrap();
        let c = TrainConfig {
            epochs: 500,
            patience: 3,
            ..cfg(0)
        };
        let (r, _) = train(GcnModel::for_graph(&g, &c), &g, &adj, &c).unwrap();
        assert!(r.epochs_run < 500);
        assert_eq!(r.epochs_run, r.best_epoch + 1 + 3);
    }

    #[test]
    fn sgc_training_learns() {
        let g = graph();
        let adj = normalize(&g.adjacency, NormMode::Row, true).unwrap();
        let model = SgcModel::init(2, 4, 3, &mut seed::stream(0, "sgc")).unwrap();
        let (r, _) = train_sgc(model, &g, &adj, &cfg(0)).unwrap();
        assert!(r.loss_series.last().unwrap() < &r.loss_series[0]);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { patience: 0, ..Default::default() },
            TrainConfig { dropout: 1.0, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
