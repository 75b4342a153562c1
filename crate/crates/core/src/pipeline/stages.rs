use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetKind, Run, Timer};
use crate::data::{generate_synthetic, ingest_adult, AdultConfig, Dataset};
use crate::error::{Error, Result};
use crate::fairness::{
    fairness_transform, format_audit_table, write_audit_csv, AuditRecord, FairnessReport, SIGN_CONVENTION,
};
use crate::mc::{mc_predict, UncertaintySummary};
use crate::metrics;
use crate::mtl::{build_single_task, finetune_single_task, job_seed, train_mtl};
use crate::nn::{read_network, write_network, Activation, NetworkParams};
use crate::pareto::{dominance_oracle, pareto_frontier, select_model, ParetoPoint, SelectionPolicy};
use crate::reweighing::{reweigh as reweigh_data, ReweighingWeights};
use crate::saliency::{average_saliency, redistribution_score, saliency_map, SaliencyReport};
use crate::train;

const UNDEFINED: &str = "undefined";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| x.to_string())
}

/// Relative reduction of `|1 - DIR|` from `before` to `after`.
pub(crate) fn gap_reduction(before: Option<f64>, after: Option<f64>) -> Option<f64> {
    let (b, a) = (fairness_transform(before?), fairness_transform(after?));
    (b > 0.0).then(|| (b - a) / b)
}

fn write_predictions(path: &Path, probs: &[f64], threshold: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "p", "prediction"])?;
    for (i, p) in probs.iter().enumerate() {
        w.write_record([i.to_string(), p.to_string(), u8::from(*p >= threshold).to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn label_dir(stage: &str, label: &str) -> Result<String> {
    if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(Error::Config(format!("protected label {label:?} is not a plain name")));
    }
    Ok(format!("{stage}/{label}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub dataset: DatasetKind,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub rows_kept: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub features: Vec<String>,
    pub protected_labels: Vec<String>,
    pub target_positive_rate: f64,
    /// Share of the privileged group (encoded 1) per protected label, whole dataset.
    pub privileged_share: BTreeMap<String, f64>,
}

pub fn ingest(run: &Run) -> Result<IngestSummary> {
    let timer = Timer::start();
    let cfg = &run.config;
    run.ensure_dir("data")?;
    let mut artifacts = vec!["data/train.json".to_string(), "data/test.json".into(), "data/ingest.json".into()];
    let (train, test, rows_read, rows_dropped) = match cfg.dataset {
        DatasetKind::Adult => {
            let adult = ingest_adult(
                &cfg.adult_path,
                &AdultConfig {
                    seed: cfg.seed,
                    train_fraction: cfg.train_fraction,
                },
            )?;
            adult.vocabulary.save(&run.path("data/vocabulary.json"))?;
            artifacts.push("data/vocabulary.json".into());
            (adult.train, adult.test, adult.rows_read, adult.rows_dropped)
        }
        DatasetKind::Synthetic => {
            let (train, test) = generate_synthetic(&cfg.synthetic_spec())?;
            let n = train.len() + test.len();
            (train, test, n, 0)
        }
    };
    train.save(&run.path("data/train.json"))?;
    test.save(&run.path("data/test.json"))?;
    let n = train.len() + test.len();
    let positives = train.target().iter().chain(test.target()).filter(|&&y| y == 1).count();
    let mut privileged_share = BTreeMap::new();
    for name in train.protected_names() {
        let ones = train.protected(name)?.values().iter().chain(test.protected(name)?.values()).filter(|&&v| v == 1).count();
        privileged_share.insert(name.to_string(), ones as f64 / n as f64);
    }
    let summary = IngestSummary {
        dataset: cfg.dataset,
        rows_read,
        rows_dropped,
        rows_kept: n,
        train_rows: train.len(),
        test_rows: test.len(),
        features: train.feature_names().to_vec(),
        protected_labels: train.protected_names().map(String::from).collect(),
        target_positive_rate: positives as f64 / n as f64,
        privileged_share,
    };
    run.write_json("data/ingest.json", &summary)?;
    run.log(format!("ingested {n} rows ({} train / {} test)", train.len(), test.len()));
    run.record("ingest", artifacts, &summary, timer.seconds())?;
    Ok(summary)
}

/// The baseline architecture: relu hidden layers, dropout after the last one, sigmoid output.
pub(crate) fn baseline_network(run: &Run, n_features: usize, seed: u64) -> Result<NetworkParams> {
    let cfg = &run.config;
    let dropout = cfg.arch().dropout_spec(seed)?;
    NetworkParams::mlp(n_features, &cfg.hidden, Some((1, Activation::Sigmoid)), dropout, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub cv_accuracy: Vec<f64>,
    pub cv_mean_accuracy: f64,
    pub test_accuracy: f64,
    pub test_auroc: Option<f64>,
    pub train_loss: Vec<f64>,
    pub parameters: usize,
}

pub fn train_baseline(run: &Run) -> Result<BaselineSummary> {
    let timer = Timer::start();
    let cfg = &run.config;
    let (train, test) = run.load_splits()?;
    let tc = cfg.baseline_train();
    let f = train.n_features();
    let cv_accuracy = run.install(|| {
        train::cross_validate(&train, cfg.cv_folds, &tc, cfg.threshold, |k| {
            baseline_network(run, f, cfg.seed.wrapping_add(k as u64 + 1))
        })
    })?;
    let mut net = baseline_network(run, f, cfg.seed)?;
    let train_loss = train::fit(&mut net, &train, &tc)?;
    let probs = train::predict(&net, &test)?;
    let summary = BaselineSummary {
        cv_mean_accuracy: cv_accuracy.iter().sum::<f64>() / cv_accuracy.len() as f64,
        cv_accuracy,
        test_accuracy: metrics::accuracy(&probs, test.target(), cfg.threshold)?,
        test_auroc: metrics::auroc(&probs, test.target())?,
        train_loss,
        parameters: net.parameter_count(),
    };
    run.ensure_dir("baseline")?;
    write_network(&run.path("baseline/model.fmnn"), &net)?;
    write_predictions(&run.path("baseline/predictions.csv"), &probs, cfg.threshold)?;
    run.write_json("baseline/metrics.json", &summary)?;
    run.log(format!("baseline test accuracy {:.4}", summary.test_accuracy));
    run.record(
        "train-baseline",
        vec!["baseline/model.fmnn".into(), "baseline/predictions.csv".into(), "baseline/metrics.json".into()],
        &summary,
        timer.seconds(),
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub threshold: f64,
    pub sign_convention: String,
    pub records: Vec<AuditRecord>,
    /// Labels whose DIR is outside the acceptable band or undefined.
    pub flagged: Vec<String>,
}

pub fn audit(run: &Run) -> Result<AuditSummary> {
    let timer = Timer::start();
    let cfg = &run.config;
    let (_, test) = run.load_splits()?;
    let net = read_network(&run.require("baseline/model.fmnn", "train-baseline")?)?;
    let probs = train::predict(&net, &test)?;
    let records = cfg
        .resolved_labels()
        .iter()
        .map(|label| {
            Ok(AuditRecord {
                model: "baseline".into(),
                report: FairnessReport::audit(&probs, test.target(), test.protected(label)?, cfg.threshold)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged = records
        .iter()
        .filter(|r| !r.report.in_band)
        .map(|r| r.report.protected_label.clone())
        .collect();
    let summary = AuditSummary {
        threshold: cfg.threshold,
        sign_convention: SIGN_CONVENTION.into(),
        records,
        flagged,
    };
    run.ensure_dir("audit")?;
    write_audit_csv(&run.path("audit/audit.csv"), &summary.records)?;
    run.write_json("audit/audit.json", &summary)?;
    run.write_text("audit/audit.txt", &format_audit_table(&summary.records))?;
    run.log(format_audit_table(&summary.records));
    run.record(
        "audit",
        vec!["audit/audit.csv".into(), "audit/audit.json".into(), "audit/audit.txt".into()],
        &summary,
        timer.seconds(),
    )?;
    Ok(summary)
}

fn baseline_reference(run: &Run, label: &str) -> Result<(Option<f64>, Option<f64>)> {
    let accuracy = if run.path("baseline/metrics.json").exists() {
        Some(run.read_json::<BaselineSummary>("baseline/metrics.json")?.test_accuracy)
    } else {
        None
    };
    let dir = if run.path("audit/audit.json").exists() {
        run.read_json::<AuditSummary>("audit/audit.json")?
            .records
            .into_iter()
            .find(|r| r.report.protected_label == label)
            .and_then(|r| r.report.dir)
    } else {
        None
    };
    Ok((accuracy, dir))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMetrics {
    /// Epoch of the snapshot the candidate was built from.
    pub model_id: usize,
    pub accuracy: f64,
    pub auroc: Option<f64>,
    pub dir: Option<f64>,
    pub abs_gap: Option<f64>,
    pub fn_diff: Option<f64>,
    pub fp_diff: Option<f64>,
    /// Mean MC uncertainty of the MTL heads on the validation rows at this epoch.
    pub target_uncertainty: f64,
    pub protected_uncertainty: f64,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationSummary {
    pub protected_label: String,
    pub candidates: usize,
    pub defined_candidates: usize,
    pub policy: SelectionPolicy,
    pub finetune_epochs: usize,
    pub finetune_head_only: bool,
    pub front: Vec<ParetoPoint>,
    pub oracle: Vec<ParetoPoint>,
    pub front_equals_oracle: bool,
    pub selected: CandidateMetrics,
    pub selected_report: FairnessReport,
    pub selected_uncertainty: UncertaintySummary,
    pub baseline_accuracy: Option<f64>,
    pub baseline_dir: Option<f64>,
    pub accuracy_change: Option<f64>,
    /// Relative reduction of |1 - DIR| against the baseline.
    pub dir_gap_reduction: Option<f64>,
    pub protected_reads_during_inference: usize,
}

fn write_candidates(path: &Path, candidates: &[CandidateMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "model_id",
        "accuracy",
        "auroc",
        "dir",
        "abs_gap",
        "fn_diff",
        "fp_diff",
        "target_uncertainty",
        "protected_uncertainty",
    ])?;
    for c in candidates {
        w.write_record([
            c.model_id.to_string(),
            c.accuracy.to_string(),
            opt(c.auroc),
            opt(c.dir),
            opt(c.abs_gap),
            opt(c.fn_diff),
            opt(c.fp_diff),
            c.target_uncertainty.to_string(),
            c.protected_uncertainty.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_points(path: &Path, points: &[ParetoPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model_id", "x", "y", "abs_gap"])?;
    for p in points {
        w.write_record([p.model_id.to_string(), p.x.to_string(), p.y.to_string(), p.gap().to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains the MTL network for `label`, fine-tunes one single-task model per epoch snapshot,
/// and selects a model from the accuracy / DIR Pareto front.
pub fn mitigate(run: &Run, label: &str) -> Result<MitigationSummary> {
    let timer = Timer::start();
    let cfg = &run.config;
    let dir = label_dir("mitigate", label)?;
    let (train, test) = run.load_splits()?;
    if !test.has_protected(label) {
        return Err(Error::Config(format!("dataset has no protected label {label:?}")));
    }
    run.ensure_dir(&dir)?;
    let mtl_cfg = cfg.mtl_train(label)?;
    let ft = cfg.finetune();
    let mut artifacts = Vec::new();

    let (snapshots, outcomes, reads) = run.install(|| {
        let snapshots = train_mtl(&train, &mtl_cfg)?;
        run.log(format!("{label}: trained {} MTL snapshots", snapshots.len()));
        // protected labels are read here only; single-task inference below must not touch them
        let reads_before = train.protected_read_count() + test.protected_read_count();
        let outcomes = snapshots
            .snapshots
            .par_iter()
            .map(|s| {
                let single = build_single_task(&s.network)?;
                finetune_single_task(single, &train, &test, &ft, job_seed(cfg.seed, s.metrics.epoch as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let reads = train.protected_read_count() + test.protected_read_count() - reads_before;
        Ok((snapshots, outcomes, reads))
    })?;
    if reads != 0 {
        return Err(Error::Contract(format!(
            "single-task inference read protected labels {reads} times"
        )));
    }
    if cfg.save_snapshots {
        snapshots.save(&run.path(&format!("{dir}/snapshots")), run.config_hash())?;
        artifacts.push(format!("{dir}/snapshots/manifest.json"));
    }
    if outcomes.is_empty() {
        return Err(Error::Config("mtl_epochs is 0, so there are no candidate models".into()));
    }

    let protected = test.protected(label)?;
    let candidates = snapshots
        .snapshots
        .iter()
        .zip(&outcomes)
        .map(|(s, o)| {
            let report = FairnessReport::audit(&o.predictions, test.target(), protected, cfg.threshold)?;
            Ok(CandidateMetrics {
                model_id: s.metrics.epoch,
                accuracy: o.accuracy,
                auroc: metrics::auroc(&o.predictions, test.target())?,
                dir: report.dir,
                abs_gap: report.abs_gap(),
                fn_diff: report.fn_diff,
                fp_diff: report.fp_diff,
                target_uncertainty: s.metrics.target_uncertainty.mean,
                protected_uncertainty: s.metrics.protected_uncertainty.mean,
                diagnostics: report.diagnostics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points = candidates
        .iter()
        .filter_map(|c| c.dir.map(|d| ParetoPoint::new(c.accuracy, d, c.model_id)))
        .collect::<Result<Vec<_>>>()?;
    if points.is_empty() {
        let diag: Vec<String> = candidates
            .iter()
            .take(5)
            .map(|c| format!("model {}: {}", c.model_id, c.diagnostics.join("; ")))
            .collect();
        return Err(Error::UndefinedMetric(format!(
            "DIR is undefined for all {} candidates for {label}: {}",
            candidates.len(),
            diag.join(" | ")
        )));
    }
    let front = pareto_frontier(&points, true, true)?;
    let oracle = dominance_oracle(&points, true);
    let chosen = select_model(&front, cfg.pareto_policy)?;
    let idx = candidates
        .iter()
        .position(|c| c.model_id == chosen.model_id)
        .expect("selected model is a candidate");
    let selected_net = &outcomes[idx].params;
    let selected_report = FairnessReport::audit(&outcomes[idx].predictions, test.target(), protected, cfg.threshold)?;
    let mc = run.install(|| mc_predict(selected_net, test.features(), cfg.report_passes, job_seed(cfg.seed, 0)))?;

    let mut sorted_oracle = oracle.clone();
    sorted_oracle.sort_by(|a, b| b.x.total_cmp(&a.x).then(a.model_id.cmp(&b.model_id)));
    let mut sorted_front = front.points.clone();
    sorted_front.sort_by(|a, b| b.x.total_cmp(&a.x).then(a.model_id.cmp(&b.model_id)));

    let (baseline_accuracy, baseline_dir) = baseline_reference(run, label)?;
    let summary = MitigationSummary {
        protected_label: label.to_string(),
        candidates: candidates.len(),
        defined_candidates: points.len(),
        policy: cfg.pareto_policy,
        finetune_epochs: ft.epochs,
        finetune_head_only: ft.head_only,
        front_equals_oracle: sorted_front == sorted_oracle,
        front: front.points.clone(),
        oracle: sorted_oracle,
        selected: candidates[idx].clone(),
        selected_report,
        selected_uncertainty: mc.summary(),
        baseline_accuracy,
        baseline_dir,
        accuracy_change: baseline_accuracy.map(|b| candidates[idx].accuracy - b),
        dir_gap_reduction: gap_reduction(baseline_dir, candidates[idx].dir),
        protected_reads_during_inference: reads,
    };

    write_network(&run.path(&format!("{dir}/selected.fmnn")), selected_net)?;
    write_predictions(&run.path(&format!("{dir}/selected_predictions.csv")), &outcomes[idx].predictions, cfg.threshold)?;
    mc.write_csv(&run.path(&format!("{dir}/selected_mc.csv")), false)?;
    write_candidates(&run.path(&format!("{dir}/candidates.csv")), &candidates)?;
    front.write_csv(&run.path(&format!("{dir}/front.csv")))?;
    write_points(&run.path(&format!("{dir}/oracle.csv")), &summary.oracle)?;
    let svg = front.render_svg(&points, Some(&chosen), &format!("Pareto front: {label}"), "accuracy");
    run.write_text(&format!("{dir}/pareto.svg"), &svg)?;
    run.write_json(&format!("{dir}/summary.json"), &summary)?;
    for f in ["selected.fmnn", "selected_predictions.csv", "selected_mc.csv", "candidates.csv", "front.csv", "oracle.csv", "pareto.svg", "summary.json"] {
        artifacts.push(format!("{dir}/{f}"));
    }
    run.log(format!(
        "{label}: selected model {} accuracy {:.4} DIR {}",
        summary.selected.model_id,
        summary.selected.accuracy,
        opt(summary.selected.dir)
    ));
    run.record(&dir, artifacts, &summary, timer.seconds())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweighSummary {
    pub protected_label: String,
    pub weights: ReweighingWeights,
    pub test_accuracy: f64,
    pub test_auroc: Option<f64>,
    pub report: FairnessReport,
    pub baseline_accuracy: Option<f64>,
    pub baseline_dir: Option<f64>,
    pub dir_gap_reduction: Option<f64>,
}

/// Retrains the baseline on reweighed training data and audits it for `label`.
pub fn reweigh(run: &Run, label: &str) -> Result<ReweighSummary> {
    let timer = Timer::start();
    let cfg = &run.config;
    let dir = label_dir("reweigh", label)?;
    let (train, test) = run.load_splits()?;
    let (weighted, weights) = reweigh_data(&train, label)?;
    let mut net = baseline_network(run, train.n_features(), cfg.seed)?;
    train::fit(&mut net, &weighted, &cfg.baseline_train())?;
    let probs = train::predict(&net, &test)?;
    let report = FairnessReport::audit(&probs, test.target(), test.protected(label)?, cfg.threshold)?;
    let (baseline_accuracy, baseline_dir) = baseline_reference(run, label)?;
    let summary = ReweighSummary {
        protected_label: label.to_string(),
        test_accuracy: metrics::accuracy(&probs, test.target(), cfg.threshold)?,
        test_auroc: metrics::auroc(&probs, test.target())?,
        dir_gap_reduction: gap_reduction(baseline_dir, report.dir),
        report,
        weights,
        baseline_accuracy,
        baseline_dir,
    };
    run.ensure_dir(&dir)?;
    summary.weights.write_csv(&run.path(&format!("{dir}/weights.csv")))?;
    write_network(&run.path(&format!("{dir}/model.fmnn")), &net)?;
    write_predictions(&run.path(&format!("{dir}/predictions.csv")), &probs, cfg.threshold)?;
    run.write_json(&format!("{dir}/summary.json"), &summary)?;
    let artifacts = ["weights.csv", "model.fmnn", "predictions.csv", "summary.json"]
        .iter()
        .map(|f| format!("{dir}/{f}"))
        .collect();
    run.log(format!("{label}: reweighed DIR {}", opt(summary.report.dir)));
    run.record(&dir, artifacts, &summary, timer.seconds())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub protected_label: String,
    pub baseline: SaliencyReport,
    pub mitigated: SaliencyReport,
    /// L1 distance between the normalized importance vectors.
    pub redistribution: f64,
    pub baseline_top: String,
    pub mitigated_top: String,
}

fn saliency_report(run: &Run, net: &NetworkParams, test: &Dataset) -> Result<SaliencyReport> {
    let cfg = &run.config;
    let grads = run.install(|| saliency_map(net, test.features(), cfg.saliency_target))?;
    average_saliency(&grads, test.feature_names(), cfg.saliency_normalization, cfg.saliency_target)
}

/// Saliency of the baseline and the selected mitigated model on the test split.
pub fn explain(run: &Run, label: &str) -> Result<ExplainSummary> {
    let timer = Timer::start();
    let dir = label_dir("explain", label)?;
    let (_, test) = run.load_splits()?;
    let base = read_network(&run.require("baseline/model.fmnn", "train-baseline")?)?;
    let mitigated = read_network(&run.require(&format!("mitigate/{label}/selected.fmnn"), "mitigate")?)?;
    let b = saliency_report(run, &base, &test)?;
    let m = saliency_report(run, &mitigated, &test)?;
    let summary = ExplainSummary {
        protected_label: label.to_string(),
        redistribution: redistribution_score(&b, &m)?,
        baseline_top: b.feature_names[b.ranking()[0]].clone(),
        mitigated_top: m.feature_names[m.ranking()[0]].clone(),
        baseline: b,
        mitigated: m,
    };
    run.ensure_dir(&dir)?;
    summary.baseline.write_csv(&run.path(&format!("{dir}/baseline.csv")))?;
    summary.mitigated.write_csv(&run.path(&format!("{dir}/mitigated.csv")))?;
    run.write_text(&format!("{dir}/baseline.svg"), &summary.baseline.render_svg(&format!("Baseline saliency ({label})")))?;
    run.write_text(&format!("{dir}/mitigated.svg"), &summary.mitigated.render_svg(&format!("Mitigated saliency ({label})")))?;
    let cmp = summary.baseline.render_comparison_svg(
        &summary.mitigated,
        ("baseline", "mitigated"),
        &format!("Feature importance: baseline vs mitigated ({label})"),
    )?;
    run.write_text(&format!("{dir}/comparison.svg"), &cmp)?;
    run.write_json(&format!("{dir}/summary.json"), &summary)?;
    let artifacts = ["baseline.csv", "mitigated.csv", "baseline.svg", "mitigated.svg", "comparison.svg", "summary.json"]
        .iter()
        .map(|f| format!("{dir}/{f}"))
        .collect();
    run.record(&dir, artifacts, &summary, timer.seconds())?;
    Ok(summary)
}
