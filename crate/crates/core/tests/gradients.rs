//! Finite-difference checks of every hand-derived backward pass.

mod common;

use rand::Rng;
use ungsl_core::gnn::{cross_entropy, GcnModel, SgcModel};
use ungsl_core::graph::{
    combine, normalize_traced, symmetrize_traced, Graph, NormMode, WeightedAdjacency,
};
use ungsl_core::gsl::{GslConfig, GslMethod, Regularizer, StructureLearner};
use ungsl_core::numerics::gradcheck::DEFAULT_STEP;
use ungsl_core::numerics::{finite_diff_check, DenseMatrix};
use ungsl_core::plugin::{reweight, reweight_backward, ThresholdMode, ThresholdVector, UnGslConfig};
use ungsl_core::seed::{self, Rng as SeedRng};
use ungsl_core::uncertainty::{UncertaintySource, UncertaintyVector};

const INSTANCES: u64 = 20;
const TOL: f64 = 1e-4;

fn row(v: &[f64]) -> DenseMatrix {
    DenseMatrix::new(1, v.len(), v.to_vec()).unwrap()
}

fn sizes(rng: &mut SeedRng) -> (usize, usize, usize) {
    (rng.random_range(5..=10), rng.random_range(2..=5), rng.random_range(2..=4))
}

fn instance(i: u64) -> (Graph, SeedRng) {
    let mut rng = seed::stream(i, "gradient-suite");
    let (n, d, k) = sizes(&mut rng);
    (common::random_instance(n, d, k, i), rng)
}

fn all(g: &Graph) -> Vec<usize> {
    (0..g.n()).collect()
}

fn assert_close(report: ungsl_core::numerics::GradCheckReport, what: &str, inst: u64) {
    assert!(
        report.max_rel_error < TOL,
        "{what}, instance {inst}: rel err {} at {:?} (analytic {}, numeric {})",
        report.max_rel_error,
        report.worst,
        report.analytic,
        report.numeric
    );
}

fn row_op(g: &Graph) -> WeightedAdjacency {
    normalize_traced(&g.adjacency, NormMode::Row, true).unwrap().0
}

#[test]
fn gcn_weights() {
    for inst in 0..INSTANCES {
        let (g, mut rng) = instance(inst);
        let adj = row_op(&g);
        let model = GcnModel::init(g.feature_dim(), 4, g.num_classes, 0.3, &mut rng);
        let idx = all(&g);
        // dropout on, with the mask replayed identically on every evaluation
        let mask_seed = 100 + inst;
        let (logits, cache) = model
            .forward(&adj, &g.features, Some(&mut seed::stream(mask_seed, "mask")))
            .unwrap();
        let (_, d_logits) = cross_entropy(&logits, &g.labels, &idx).unwrap();
        let grads = model.backward(&cache, &adj, &g.features, &d_logits, false).unwrap();
        let loss = |p: &[DenseMatrix]| {
            let m = GcnModel::from_weights(p[0].clone(), p[1].clone(), 0.3).unwrap();
            let (l, _) = m
                .forward(&adj, &g.features, Some(&mut seed::stream(mask_seed, "mask")))
                .unwrap();
            cross_entropy(&l, &g.labels, &idx).unwrap().0
        };
        let r = finite_diff_check(
            loss,
            &[model.w1.value.clone(), model.w2.value.clone()],
            &[grads.w1, grads.w2],
            DEFAULT_STEP,
        )
        .unwrap();
        assert_close(r, "gcn weights", inst);
    }
}

#[test]
fn gcn_adjacency_entries() {
    for inst in 0..INSTANCES {
        let (g, mut rng) = instance(inst);
        let adj = row_op(&g);
        let model = GcnModel::init(g.feature_dim(), 4, g.num_classes, 0.0, &mut rng);
        let idx = all(&g);
        let (logits, cache) = model.forward::<SeedRng>(&adj, &g.features, None).unwrap();
        let (_, d_logits) = cross_entropy(&logits, &g.labels, &idx).unwrap();
        let grads = model.backward(&cache, &adj, &g.features, &d_logits, true).unwrap();
        let loss = |p: &[DenseMatrix]| {
            let a = adj.with_values(p[0].as_slice().to_vec()).unwrap();
            let l = model.predict(&a, &g.features).unwrap();
            cross_entropy(&l, &g.labels, &idx).unwrap().0
        };
        let r = finite_diff_check(
            loss,
            &[row(adj.matrix().values())],
            &[row(&grads.adj.unwrap())],
            DEFAULT_STEP,
        )
        .unwrap();
        assert_close(r, "gcn adjacency", inst);
    }
}

#[test]
fn sgc_classifier() {
    for inst in 0..INSTANCES {
        let (g, mut rng) = instance(inst);
        let adj = row_op(&g);
        let model = SgcModel::init(2, g.feature_dim(), g.num_classes, &mut rng).unwrap();
        let prop = model.propagate(&adj, &g.features).unwrap();
        let idx = all(&g);
        let (_, d_logits) = cross_entropy(&model.logits(&prop).unwrap(), &g.labels, &idx).unwrap();
        let grad = model.backward(&prop, &d_logits).unwrap();
        let loss = |p: &[DenseMatrix]| cross_entropy(&prop.matmul(&p[0]).unwrap(), &g.labels, &idx).unwrap().0;
        let r = finite_diff_check(loss, &[model.w.value.clone()], &[grad], DEFAULT_STEP).unwrap();
        assert_close(r, "sgc", inst);
    }
}

/// Random linear functional of a structure's stored entries.
fn probe(len: usize, rng: &mut SeedRng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn normalization_backward() {
    for inst in 0..INSTANCES {
        let (g, mut rng) = instance(inst);
        for mode in [NormMode::Row, NormMode::Symmetric] {
            for loops in [true, false] {
                let src = if loops {
                    g.adjacency.clone()
                } else {
                    // every row needs positive degree without self-loops
                    let mut t: Vec<_> = g.adjacency.matrix().iter().collect();
                    t.extend((0..g.n()).map(|i| (i, (i + 1) % g.n(), 0.5)));
                    WeightedAdjacency::from_edges(g.n(), t).unwrap()
                };
                let (out, trace) = normalize_traced(&src, mode, loops).unwrap();
                let r = probe(out.nnz(), &mut rng);
                let grad = trace.backward(&out, &r).unwrap();
                let loss = |p: &[DenseMatrix]| {
                    let a = src.with_values(p[0].as_slice().to_vec()).unwrap();
                    dot(normalize_traced(&a, mode, loops).unwrap().0.matrix().values(), &r)
                };
                let rep =
                    finite_diff_check(loss, &[row(src.matrix().values())], &[row(&grad)], DEFAULT_STEP).unwrap();
                assert_close(rep, &format!("normalize {mode:?} loops={loops}"), inst);
            }
        }
    }
}

#[test]
fn symmetrize_and_combine_backward() {
    for inst in 0..INSTANCES {
        let (g, mut rng) = instance(inst);
        let (out, trace) = symmetrize_traced(&g.adjacency);
        let r = probe(out.nnz(), &mut rng);
        let grad = trace.backward(&r).unwrap();
        let src = &g.adjacency;
        let loss = |p: &[DenseMatrix]| {
            let a = src.with_values(p[0].as_slice().to_vec()).unwrap();
            dot(symmetrize_traced(&a).0.matrix().values(), &r)
        };
        let rep = finite_diff_check(loss, &[row(src.matrix().values())], &[row(&grad)], DEFAULT_STEP).unwrap();
        assert_close(rep, "symmetrize", inst);

        let other = common::random_instance(g.n(), 2, 2, 1000 + inst).adjacency;
        let (wa, wb) = (0.3, 0.7);
        let (out, trace) = combine(src, wa, &other, wb).unwrap();
        let r = probe(out.nnz(), &mut rng);
        let (ga, gb) = (trace.backward_a(&r), trace.backward_b(&r));
        let loss = |p: &[DenseMatrix]| {
            let a = src.with_values(p[0].as_slice().to_vec()).unwrap();
            let b = other.with_values(p[1].as_slice().to_vec()).unwrap();
            dot(combine(&a, wa, &b, wb).unwrap().0.matrix().values(), &r)
        };
        let rep = finite_diff_check(
            loss,
            &[row(src.matrix().values()), row(other.matrix().values())],
            &[row(&ga), row(&gb)],
            DEFAULT_STEP,
        )
        .unwrap();
        assert_close(rep, "combine", inst);
    }
}

/// Confidences and thresholds with every `c_j − ε_i` at least `1e-3` away
/// from the branch point.
fn separated(n: usize, rng: &mut SeedRng) -> (UncertaintyVector, Vec<f64>) {
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.5)).collect();
    let u = UncertaintyVector::from_uncertainty(u, UncertaintySource::Entropy).unwrap();
    let c = u.confidence().to_vec();
    let eps = (0..n)
        .map(|_| loop {
            let e: f64 = rng.random_range(0.0..1.0);
            if c.iter().all(|cj| (cj - e).abs() > 1e-3) {
                break e;
            }
        })
        .collect();
    (u, eps)
}

#[test]
fn reweight_thresholds_and_base() {
    let cfg = UnGslConfig {
        tau: 2.0,
        beta: 0.3,
        eps_lr: 0.01,
    };
    for inst in 0..INSTANCES {
        let (g, mut rng) = instance(inst);
        let s = &g.adjacency;
        let (u, eps) = separated(g.n(), &mut rng);
        let refined = reweight(s, &u, &eps, &cfg).unwrap();
        let r = probe(refined.matrix().nnz(), &mut rng);
        let d_hat = refined.matrix().matrix().with_values(r.clone()).unwrap();
        let grads = reweight_backward(&refined, &d_hat).unwrap();
        let loss = |p: &[DenseMatrix]| {
            let a = s.with_values(p[0].as_slice().to_vec()).unwrap();
            let out = reweight(&a, &u, p[1].as_slice(), &cfg).unwrap();
            dot(out.matrix().matrix().values(), &r)
        };
        let rep = finite_diff_check(
            loss,
            &[row(s.matrix().values()), row(&eps)],
            &[row(&grads.base), row(&grads.eps)],
            DEFAULT_STEP,
        )
        .unwrap();
        assert_close(rep, "reweight", inst);
    }
}

#[test]
fn single_edge_smooth_branch() {
    let s = WeightedAdjacency::from_edges(2, vec![(0, 1, 0.8)]).unwrap();
    let u = UncertaintyVector::from_uncertainty(vec![0.5, 0.1], UncertaintySource::Entropy).unwrap();
    let cfg = UnGslConfig::default();
    let eps = vec![0.3, 0.3];
    let refined = reweight(&s, &u, &eps, &cfg).unwrap();
    let d_hat = refined.matrix().matrix().with_values(vec![1.0]).unwrap();
    let g = reweight_backward(&refined, &d_hat).unwrap();
    assert!(g.eps[0] < 0.0);
    let loss = |p: &[DenseMatrix]| reweight(&s, &u, p[0].as_slice(), &cfg).unwrap().matrix().matrix().values()[0];
    let rep = finite_diff_check(loss, &[row(&eps)], &[row(&g.eps)], DEFAULT_STEP).unwrap();
    assert!(rep.max_rel_error < TOL);
}

struct Setup {
    method: GslMethod,
    attach: bool,
    symmetrize: bool,
    lambda: f64,
}

fn learner_chain(setup: Setup) {
    let train = ungsl_core::gnn::TrainConfig {
        hidden: 4,
        dropout: 0.0,
        ..Default::default()
    };
    for inst in 0..INSTANCES {
        let (g, mut rng) = instance(inst);
        let cfg = GslConfig {
            method: setup.method,
            k: 3,
            alpha: 0.6,
            lambda: setup.lambda,
            regularizers: vec![Regularizer::L1Sparsity, Regularizer::Smoothness],
            encoder_width: 3,
            similarity: None,
        };
        let mut learner = StructureLearner::new(&g, cfg, &ungsl_core::gnn::TrainConfig { seed: inst, ..train.clone() })
            .unwrap();
        if setup.attach {
            let (u, eps) = separated(g.n(), &mut rng);
            let ucfg = UnGslConfig {
                tau: 2.0,
                beta: 0.4,
                eps_lr: 0.01,
            };
            learner
                .attach_with(u, ucfg, ThresholdMode::Learnable(ThresholdVector::from_values(eps)))
                .unwrap();
            learner.set_symmetrize_refined(setup.symmetrize);
        }
        let idx = all(&g);
        let built = learner.build().unwrap();
        let (_, grads) = learner.objective(&g, &built, &idx, None).unwrap();
        assert!(grads.encoder.max_abs() > 0.0, "encoder gradient vanished");
        if setup.attach {
            assert!(grads.eps.as_ref().unwrap().iter().any(|&e| e != 0.0));
        }

        let mut params = vec![
            learner.encoder().value.clone(),
            learner.classifier().w1.value.clone(),
            learner.classifier().w2.value.clone(),
        ];
        let mut analytic = vec![grads.encoder.clone(), grads.w1.clone(), grads.w2.clone()];
        if setup.attach {
            let eps = match learner.threshold_mode().unwrap() {
                ThresholdMode::Learnable(t) => t.values().to_vec(),
                _ => unreachable!(),
            };
            params.push(row(&eps));
            analytic.push(row(grads.eps.as_ref().unwrap()));
        }
        let base = learner.clone();
        let support = built.structure().support_id();
        let loss = |p: &[DenseMatrix]| {
            let mut l = base.clone();
            l.encoder_mut().value = p[0].clone();
            l.classifier_mut().w1.value = p[1].clone();
            l.classifier_mut().w2.value = p[2].clone();
            if let Some(ThresholdMode::Learnable(t)) = l.threshold_mode_mut() {
                t.param.value = DenseMatrix::new(t.len(), 1, p[3].as_slice().to_vec()).unwrap();
            }
            let b = l.build().unwrap();
            assert_eq!(b.structure().support_id(), support, "top-k selection flipped");
            l.objective(&g, &b, &idx, None).unwrap().0
        };
        let analytic: Vec<DenseMatrix> = analytic
            .into_iter()
            .zip(&params)
            .map(|(a, p)| DenseMatrix::new(p.rows(), p.cols(), a.into_vec()).unwrap())
            .collect();
        let rep = finite_diff_check(loss, &params, &analytic, DEFAULT_STEP).unwrap();
        assert_close(
            rep,
            &format!(
                "{:?} attach={} sym={} lambda={}",
                setup.method, setup.attach, setup.symmetrize, setup.lambda
            ),
            inst,
        );
    }
}

#[test]
fn metric_knn_chain() {
    learner_chain(Setup {
        method: GslMethod::MetricKnn,
        attach: false,
        symmetrize: false,
        lambda: 0.0,
    });
}

#[test]
fn similarity_residual_chain_with_penalty() {
    learner_chain(Setup {
        method: GslMethod::SimilarityResidual,
        attach: false,
        symmetrize: false,
        lambda: 0.05,
    });
}

#[test]
fn attached_chain() {
    for method in [GslMethod::MetricKnn, GslMethod::SimilarityResidual] {
        learner_chain(Setup {
            method,
            attach: true,
            symmetrize: false,
            lambda: 0.02,
        });
    }
}

#[test]
fn attached_symmetrized_chain() {
    learner_chain(Setup {
        method: GslMethod::MetricKnn,
        attach: true,
        symmetrize: true,
        lambda: 0.0,
    });
}
