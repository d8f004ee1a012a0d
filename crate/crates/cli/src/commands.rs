use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::Rng;

use ungsl_core::graph::io::write_structure;
use ungsl_core::seed;
use ungsl_core::theory::{check_prop1, entropy_correlation, log_sum_oracle, random_prop1_instance, LinearProbe};
use ungsl_harness::config::DatasetConfig;
use ungsl_harness::overhead::overhead_report;
use ungsl_harness::protocols::{
    ablation_fixed_epsilon, ablation_symmetrize, prune_experiment, robustness, run_seeds, sweep, RunOutcome, SweepParam,
};
use ungsl_harness::records::{append_records, load_records, ExperimentRecord, RunMode, RUNS_FILE};
use ungsl_harness::report::{format_table, summarize, write_csv};
use ungsl_harness::sbm::SbmConfig;
use ungsl_harness::{HarnessError, RunConfig};

use crate::cli::{ExperimentArgs, ReportArgs, Switch, TrainArgs, VerifyArgs};
use crate::BoundViolation;

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

/// Write each outcome's structure and uncertainty next to the records, then
/// append the records to `runs.jsonl`.
fn save(out: &Path, outcomes: Vec<RunOutcome>) -> Result<Vec<ExperimentRecord>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut records = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let mut rec = o.record;
        let stem = format!(
            "{}-{}-seed{}",
            file_safe(&rec.spec.protocol),
            file_safe(&rec.label),
            rec.seed
        );
        if let Some(s) = &o.structure {
            let path = out.join(format!("{stem}-structure.edges"));
            write_structure(&path, s)?;
            rec.artifacts.push(path);
        }
        if let Some(u) = &o.uncertainty {
            let path = out.join(format!("{stem}-uncertainty.csv"));
            u.write_csv_with(&path, o.thresholds.as_deref())?;
            rec.artifacts.push(path);
        }
        records.push(rec);
    }
    append_records(&out.join(RUNS_FILE), &records)?;
    Ok(records)
}

fn summary(out: &Path, name: &str, records: &[ExperimentRecord]) -> Result<()> {
    let rows = summarize(records)?;
    print!("{}", format_table(&rows));
    let path = out.join(format!("{name}.csv"));
    write_csv(&path, &rows)?;
    println!("records: {}", out.join(RUNS_FILE).display());
    println!("summary: {}", path.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let (mode, label) = match a.ungsl {
        Switch::On => (RunMode::Pipeline { variant: cfg.pipeline.variant }, "ungsl"),
        Switch::Off => (RunMode::Base, "base"),
    };
    let outcomes = run_seeds(&cfg, "train", mode, label, a.output.jobs)?;
    let records = save(&a.output.out, outcomes)?;
    summary(&a.output.out, "train", &records)
}

pub fn experiment(a: &ExperimentArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let (out, jobs) = (&a.output.out, a.output.jobs);
    let exp = &cfg.experiment;
    if a.prune {
        let (curve, outcomes) = prune_experiment(&cfg, &exp.prune_ratios, jobs)?;
        save(out, outcomes)?;
        fs::create_dir_all(out)?;
        let path = out.join("prune_curve.csv");
        curve.write_csv(&path)?;
        println!("{:>6} {:>10} {:>10} {:>10}", "ratio", "guided", "random", "paired");
        let (g, r) = (curve.guided_mean(), curve.random_mean());
        for (i, ratio) in curve.ratios.iter().enumerate() {
            println!(
                "{ratio:>6} {:>10.4} {:>10.4} {:>+10.4}",
                g[i],
                r[i],
                curve.paired_difference(i)
            );
        }
        println!("curve: {}", path.display());
        return Ok(());
    }
    if a.overhead {
        let report = overhead_report(&cfg, &exp.overhead_sizes, exp.overhead_repeats)?;
        fs::create_dir_all(out)?;
        let path = out.join("overhead_scaling.csv");
        report.write_csv(&path)?;
        println!(
            "training: base {:.3}s, with reweighting {:.3}s (x{:.3})",
            report.base_secs,
            report.ungsl_secs,
            report.ratio()
        );
        for r in &report.scaling {
            println!(
                "n = {:>6}  m = {:>8}  psi evaluations = {:>8}  reweight {:.3e}s",
                r.n, r.m_offdiag, r.psi_evaluations, r.reweight_secs
            );
        }
        println!("linear fit in m: R^2 = {:.4}", report.r_squared);
        println!("scaling: {}", path.display());
        return Ok(());
    }
    let (name, outcomes) = if a.robustness {
        ("robustness".to_string(), robustness(&cfg, exp.noise_kind, &exp.levels, jobs)?)
    } else if let Some(p) = &a.sweep {
        let param: SweepParam = p.parse()?;
        let values = if exp.sweep_values.is_empty() {
            param.default_values()
        } else {
            exp.sweep_values.clone()
        };
        (format!("sweep_{param}"), sweep(&cfg, param, &values, jobs)?)
    } else if let Some(name) = &a.ablation {
        match name.as_str() {
            "fixed-epsilon" | "fixed_epsilon" => (
                "ablation_fixed_epsilon".to_string(),
                ablation_fixed_epsilon(&cfg, exp.fixed_fraction, jobs)?,
            ),
            "symmetrize" => ("ablation_symmetrize".to_string(), ablation_symmetrize(&cfg, jobs)?),
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown ablation `{other}` (expected fixed-epsilon or symmetrize)"
                ))
                .into())
            }
        }
    } else {
        unreachable!("clap requires one protocol flag")
    };
    let records = save(out, outcomes)?;
    summary(out, &name, &records)
}

fn verify_prop1(a: &VerifyArgs) -> Result<()> {
    let mut rng = seed::stream(a.seed, "verify-prop1");
    let (mut min_slack, mut eta_min, mut eta_max) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut sum_dev: f64 = 0.0;
    for k in 0..a.instances {
        let (adj, x, w) = random_prop1_instance(&mut rng, a.max_nodes, a.max_classes);
        let r = check_prop1(&adj, &x, &w)?;
        min_slack = min_slack.min(r.min_slack());
        eta_min = eta_min.min(r.eta_range.0);
        eta_max = eta_max.max(r.eta_range.1);
        sum_dev = sum_dev.max((r.eta_sum_range.0 - 1.0).abs()).max((r.eta_sum_range.1 - 1.0).abs());
        if r.min_slack() < -1e-9 {
            return Err(BoundViolation(format!("instance {k}: slack {:.3e}", r.min_slack())).into());
        }
    }
    println!("prop1: {} instances, min slack {min_slack:.3e}", a.instances);
    println!("eta in [{eta_min:.3e}, {eta_max:.6}], max |sum - 1| = {sum_dev:.3e}");
    if !(eta_min > 0.0 && eta_max <= 1.0) || sum_dev > 1e-9 {
        return Err(BoundViolation("eta coefficients outside (0, 1] or not summing to 1".into()).into());
    }
    Ok(())
}

fn verify_logsum(a: &VerifyArgs) -> Result<()> {
    let mut rng = seed::stream(a.seed, "verify-logsum");
    let mut worst = f64::INFINITY;
    for k in 0..a.trials {
        let d = rng.random_range(1..=16);
        let x: Vec<f64> = (0..d)
            .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random_range(0.0..10.0) })
            .collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(1e-3..10.0)).collect();
        let r = log_sum_oracle(&x, &y)?;
        worst = worst.min(r.lhs - r.rhs);
        if !r.holds {
            return Err(BoundViolation(format!("trial {k}: lhs {} < rhs {}", r.lhs, r.rhs)).into());
        }
    }
    println!("logsum: {} trials, min lhs - rhs {worst:.3e}", a.trials);
    Ok(())
}

fn verify_correlation(a: &VerifyArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig {
            dataset: DatasetConfig {
                path: None,
                sbm: Some(SbmConfig::with_homophily(500, 4, 3.0, 0.8)),
                per_seed: true,
            },
            ..Default::default()
        },
    };
    let graph = cfg.build_graph(a.seed)?;
    let mut tc = cfg.train_for(a.seed);
    let mut probe = LinearProbe::new(&graph, a.seed)?;
    match a.epochs {
        Some(0) => {}
        Some(e) => {
            tc.epochs = e;
            probe.fit(&graph, &tc)?;
        }
        None => {
            probe.fit(&graph, &tc)?;
        }
    }
    let report = entropy_correlation(&graph, &probe)?;
    fs::create_dir_all(&a.output.out)?;
    let path: PathBuf = a.output.out.join("correlation.csv");
    report.write_csv(&path)?;
    match report.r {
        Some(r) => println!("correlation: {} nodes, Pearson r = {r:.4}", graph.n()),
        None => println!("correlation: {} nodes, degenerate (zero variance)", graph.n()),
    }
    println!("pairs: {}", path.display());
    Ok(())
}

pub fn verify(a: &VerifyArgs) -> Result<()> {
    if a.prop1 {
        verify_prop1(a)?;
    }
    if a.logsum {
        verify_logsum(a)?;
    }
    if a.correlation {
        verify_correlation(a)?;
    }
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let records = load_records(&a.runs)?;
    let rows = summarize(&records)?;
    print!("{}", format_table(&rows));
    let path = a.csv.clone().unwrap_or_else(|| {
        a.runs
            .parent()
            .map(|d| d.join("report.csv"))
            .unwrap_or_else(|| PathBuf::from("report.csv"))
    });
    write_csv(&path, &rows)?;
    println!("csv: {}", path.display());
    Ok(())
}
