use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::stages::{gap_reduction, AuditSummary, BaselineSummary, ExplainSummary, IngestSummary, MitigationSummary, ReweighSummary};
use super::{Run, Timer};
use crate::error::{Error, Result};
use crate::fairness::fairness_transform;

pub const IMPROVEMENT_FORMULA: &str = "relative reduction of |1 - DIR| against the baseline: (|1 - DIR_base| - |1 - DIR_new|) / |1 - DIR_base|";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub accuracy: f64,
    pub dir: Option<f64>,
    pub abs_gap: Option<f64>,
    pub fn_diff: Option<f64>,
    pub fp_diff: Option<f64>,
    pub dir_gap_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub protected_label: String,
    pub rows: Vec<MethodRow>,
    pub selected_model: Option<usize>,
    pub pareto_front_size: Option<usize>,
    pub redistribution: Option<f64>,
    pub baseline_top_feature: Option<String>,
    pub mitigated_top_feature: Option<String>,
    pub figures: Vec<String>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub ingest: IngestSummary,
    pub baseline: BaselineSummary,
    pub labels: Vec<LabelReport>,
    pub improvement_formula: String,
}

fn optional<T: serde::de::DeserializeOwned>(run: &Run, rel: &str) -> Result<Option<T>> {
    if run.path(rel).exists() {
        run.read_json(rel).map(Some)
    } else {
        Ok(None)
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

fn label_report(run: &Run, label: &str, audit: Option<&AuditSummary>, baseline: &BaselineSummary) -> Result<LabelReport> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let base = audit.and_then(|a| a.records.iter().find(|r| r.report.protected_label == label));
    match base {
        Some(r) => rows.push(MethodRow {
            method: "baseline".into(),
            accuracy: baseline.test_accuracy,
            dir: r.report.dir,
            abs_gap: r.report.abs_gap(),
            fn_diff: r.report.fn_diff,
            fp_diff: r.report.fp_diff,
            dir_gap_reduction: None,
        }),
        None => skipped.push("audit".to_string()),
    }
    let base_dir = base.and_then(|r| r.report.dir);
    let rw: Option<ReweighSummary> = optional(run, &format!("reweigh/{label}/summary.json"))?;
    match &rw {
        Some(s) => rows.push(MethodRow {
            method: "reweighing".into(),
            accuracy: s.test_accuracy,
            dir: s.report.dir,
            abs_gap: s.report.abs_gap(),
            fn_diff: s.report.fn_diff,
            fp_diff: s.report.fp_diff,
            dir_gap_reduction: gap_reduction(base_dir, s.report.dir),
        }),
        None => skipped.push("reweigh".into()),
    }
    let mit: Option<MitigationSummary> = optional(run, &format!("mitigate/{label}/summary.json"))?;
    let mut figures = Vec::new();
    match &mit {
        Some(s) => {
            rows.push(MethodRow {
                method: "proposed".into(),
                accuracy: s.selected.accuracy,
                dir: s.selected.dir,
                abs_gap: s.selected.dir.map(fairness_transform),
                fn_diff: s.selected.fn_diff,
                fp_diff: s.selected.fp_diff,
                dir_gap_reduction: gap_reduction(base_dir, s.selected.dir),
            });
            figures.push(format!("mitigate/{label}/pareto.svg"));
        }
        None => skipped.push("mitigate".into()),
    }
    let ex: Option<ExplainSummary> = optional(run, &format!("explain/{label}/summary.json"))?;
    match &ex {
        Some(_) => figures.push(format!("explain/{label}/comparison.svg")),
        None => skipped.push("explain".into()),
    }
    Ok(LabelReport {
        protected_label: label.to_string(),
        rows,
        selected_model: mit.as_ref().map(|m| m.selected.model_id),
        pareto_front_size: mit.as_ref().map(|m| m.front.len()),
        redistribution: ex.as_ref().map(|e| e.redistribution),
        baseline_top_feature: ex.as_ref().map(|e| e.baseline_top.clone()),
        mitigated_top_feature: ex.as_ref().map(|e| e.mitigated_top.clone()),
        figures,
        skipped,
    })
}

fn markdown(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Fairness experiment report\n");
    let _ = writeln!(s, "Config hash: `{}`\n", r.config_hash);
    let _ = writeln!(
        s,
        "Dataset: {:?}, {} rows kept of {} read ({} train / {} test).\n",
        r.ingest.dataset, r.ingest.rows_kept, r.ingest.rows_read, r.ingest.train_rows, r.ingest.test_rows
    );
    let cv: Vec<String> = r.baseline.cv_accuracy.iter().map(|a| format!("{a:.4}")).collect();
    let _ = writeln!(
        s,
        "Baseline: test accuracy {:.4}, AUROC {}, cross-validation accuracy [{}].\n",
        r.baseline.test_accuracy,
        fmt(r.baseline.test_auroc),
        cv.join(", ")
    );
    let _ = writeln!(s, "Improvement is the {}.\n", r.improvement_formula);
    for l in &r.labels {
        let _ = writeln!(s, "## Protected label: {}\n", l.protected_label);
        let _ = writeln!(s, "| method | accuracy | DIR | abs(1 - DIR) | fn_diff | fp_diff | improvement |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|");
        for row in &l.rows {
            let _ = writeln!(
                s,
                "| {} | {:.4} | {} | {} | {} | {} | {} |",
                row.method,
                row.accuracy,
                fmt(row.dir),
                fmt(row.abs_gap),
                fmt(row.fn_diff),
                fmt(row.fp_diff),
                fmt(row.dir_gap_reduction)
            );
        }
        let _ = writeln!(s);
        if let (Some(m), Some(n)) = (l.selected_model, l.pareto_front_size) {
            let _ = writeln!(s, "Selected model {m} from a Pareto front of {n}.\n");
        }
        if let Some(d) = l.redistribution {
            let _ = writeln!(
                s,
                "Saliency redistribution (L1 of normalized importances): {d:.4}; top feature {} (baseline) vs {} (mitigated).\n",
                l.baseline_top_feature.as_deref().unwrap_or("-"),
                l.mitigated_top_feature.as_deref().unwrap_or("-")
            );
        }
        for f in &l.figures {
            let _ = writeln!(s, "![{f}]({f})\n");
        }
        if !l.skipped.is_empty() {
            let _ = writeln!(s, "Skipped stages: {}.\n", l.skipped.join(", "));
        }
    }
    s
}

/// Consolidates every completed stage into `report.json` and `report.md`.
pub fn report(run: &Run) -> Result<Report> {
    let timer = Timer::start();
    let ingest: Option<IngestSummary> = optional(run, "data/ingest.json")?;
    let baseline: Option<BaselineSummary> = optional(run, "baseline/metrics.json")?;
    let (ingest, baseline) = match (ingest, baseline) {
        (Some(i), Some(b)) => (i, b),
        (i, b) => {
            let missing: Vec<&str> = [("ingest", i.is_none()), ("train-baseline", b.is_none())]
                .iter()
                .filter(|(_, m)| *m)
                .map(|(n, _)| *n)
                .collect();
            return Err(Error::Data(format!("report needs completed stages: {}", missing.join(", "))));
        }
    };
    let audit: Option<AuditSummary> = optional(run, "audit/audit.json")?;
    let labels = run
        .config
        .resolved_labels()
        .iter()
        .map(|l| label_report(run, l, audit.as_ref(), &baseline))
        .collect::<Result<Vec<_>>>()?;
    let report = Report {
        config_hash: run.config_hash().to_string(),
        ingest,
        baseline,
        labels,
        improvement_formula: IMPROVEMENT_FORMULA.into(),
    };
    run.write_json("report.json", &report)?;
    run.write_text("report.md", &markdown(&report))?;
    run.record("report", vec!["report.json".into(), "report.md".into()], &report.labels, timer.seconds())?;
    Ok(report)
}
