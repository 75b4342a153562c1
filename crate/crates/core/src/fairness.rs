//! Group fairness metrics: disparate impact ratio and equalized-odds gaps.
//!
//! Protected labels are binary: `0` marks the unprivileged group, `1` the privileged one.
//! Rates that divide by an empty count are reported as undefined, never as a sentinel.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DIR_BAND: (f64, f64) = (0.8, 1.2);

/// How a raw protected column was mapped onto {0, 1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinarizationRule {
    /// Numeric values `<= threshold` are privileged.
    AtMost { threshold: f64 },
    Categories {
        privileged: Vec<String>,
        unprivileged: Vec<String>,
    },
    /// Values were already 0/1.
    Binary,
}

impl BinarizationRule {
    /// Privileged-group mapping for the ADULT protected columns.
    pub fn adult(name: &str) -> Option<Self> {
        let cats = |p: &[&str], u: &[&str]| BinarizationRule::Categories {
            privileged: p.iter().map(|s| s.to_string()).collect(),
            unprivileged: u.iter().map(|s| s.to_string()).collect(),
        };
        match name {
            "age" => Some(BinarizationRule::AtMost { threshold: 40.0 }),
            "race" => Some(cats(
                &["White", "Asian-Pac-Islander"],
                &["Black", "Amer-Indian-Eskimo", "Other"],
            )),
            "sex" => Some(cats(&["Male"], &["Female"])),
            _ => None,
        }
    }

    pub fn apply(&self, raw: &str) -> Result<u8> {
        let raw = raw.trim();
        match self {
            BinarizationRule::AtMost { threshold } => {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| Error::Data(format!("protected value '{raw}' is not numeric")))?;
                Ok(u8::from(v <= *threshold))
            }
            BinarizationRule::Categories {
                privileged,
                unprivileged,
            } => {
                if privileged.iter().any(|p| p == raw) {
                    Ok(1)
                } else if unprivileged.iter().any(|u| u == raw) {
                    Ok(0)
                } else {
                    Err(Error::Data(format!("protected value '{raw}' has no binarization rule")))
                }
            }
            BinarizationRule::Binary => match raw {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(Error::Data(format!("protected value '{raw}' is not 0/1"))),
            },
        }
    }
}

/// A binarized protected attribute over one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedLabeling {
    pub name: String,
    values: Vec<u8>,
    pub rule: BinarizationRule,
}

impl ProtectedLabeling {
    pub fn new(name: impl Into<String>, values: Vec<u8>, rule: BinarizationRule) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| **v > 1) {
            return Err(Error::Data(format!("protected value {v} is not 0/1")));
        }
        Ok(Self {
            name: name.into(),
            values,
            rule,
        })
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            values: indices.iter().map(|&i| self.values[i]).collect(),
            rule: self.rule.clone(),
        }
    }

    /// Same people, privileged and unprivileged roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            name: self.name.clone(),
            values: self.values.iter().map(|v| 1 - v).collect(),
            rule: self.rule.clone(),
        }
    }
}

/// Maps a raw column onto {0, 1}; the first unmapped value is named in the error.
pub fn binarize_protected(
    name: &str,
    raw: &[&str],
    rule: &BinarizationRule,
) -> Result<ProtectedLabeling> {
    let values = raw.iter().map(|r| rule.apply(r)).collect::<Result<Vec<_>>>()?;
    ProtectedLabeling::new(name, values, rule.clone())
}

pub fn threshold_predictions(probabilities: &[f64], threshold: f64) -> Vec<u8> {
    probabilities.iter().map(|&p| u8::from(p >= threshold)).collect()
}

/// `|1 - dir|`: distance from the ideal ratio.
pub fn fairness_transform(dir: f64) -> f64 {
    (1.0 - dir).abs()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl GroupConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positive_rate(&self) -> Option<f64> {
        ratio(self.tp + self.fp, self.total())
    }

    /// FN / (FN + TP)
    pub fn false_negative_rate(&self) -> Option<f64> {
        ratio(self.fn_, self.fn_ + self.tp)
    }

    /// FP / (FP + TN)
    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion counts for (unprivileged, privileged).
pub fn group_confusions(
    predictions: &[u8],
    truth: &[u8],
    protected: &[u8],
) -> Result<[GroupConfusion; 2]> {
    if predictions.len() != truth.len() || predictions.len() != protected.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} labels, {} protected values",
            predictions.len(),
            truth.len(),
            protected.len()
        )));
    }
    let mut groups = [GroupConfusion::default(); 2];
    for ((&p, &y), &g) in predictions.iter().zip(truth).zip(protected) {
        let c = &mut groups[g as usize];
        match (p, y) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(groups)
}

fn positive_rates(predictions: &[u8], protected: &[u8]) -> Result<[f64; 2]> {
    if predictions.len() != protected.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} protected values",
            predictions.len(),
            protected.len()
        )));
    }
    let mut pos = [0u64; 2];
    let mut n = [0u64; 2];
    for (&p, &g) in predictions.iter().zip(protected) {
        n[g as usize] += 1;
        pos[g as usize] += u64::from(p);
    }
    for (g, label) in [(0, "unprivileged"), (1, "privileged")] {
        if n[g] == 0 {
            return Err(Error::UndefinedMetric(format!("DIR undefined: {label} group is empty")));
        }
    }
    Ok([pos[0] as f64 / n[0] as f64, pos[1] as f64 / n[1] as f64])
}

/// Positive-prediction rate of the unprivileged group over that of the privileged group.
pub fn disparate_impact(predictions: &[u8], protected: &[u8]) -> Result<f64> {
    let [unpriv, priv_] = positive_rates(predictions, protected)?;
    if priv_ == 0.0 {
        return Err(Error::UndefinedMetric(format!(
            "DIR undefined: privileged positive rate is 0 (unprivileged rate {unpriv})"
        )));
    }
    Ok(unpriv / priv_)
}

/// Signed equalized-odds gaps, unprivileged minus privileged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualizedOdds {
    pub fn_diff: Option<f64>,
    pub fp_diff: Option<f64>,
    pub diagnostics: Vec<String>,
}

pub fn equalized_odds_diffs(predictions: &[u8], truth: &[u8], protected: &[u8]) -> Result<EqualizedOdds> {
    let groups = group_confusions(predictions, truth, protected)?;
    Ok(equalized_odds_from(&groups))
}

fn equalized_odds_from(groups: &[GroupConfusion; 2]) -> EqualizedOdds {
    let mut diagnostics = Vec::new();
    let mut diff = |name: &str, rate: fn(&GroupConfusion) -> Option<f64>| {
        match (rate(&groups[0]), rate(&groups[1])) {
            (Some(u), Some(p)) => Some(u - p),
            (u, p) => {
                let missing: Vec<&str> = [("unprivileged", u), ("privileged", p)]
                    .iter()
                    .filter(|(_, r)| r.is_none())
                    .map(|(g, _)| *g)
                    .collect();
                diagnostics.push(format!("{name} undefined for {} group", missing.join(" and ")));
                None
            }
        }
    };
    let fn_diff = diff("FN rate", GroupConfusion::false_negative_rate);
    let fp_diff = diff("FP rate", GroupConfusion::false_positive_rate);
    EqualizedOdds {
        fn_diff,
        fp_diff,
        diagnostics,
    }
}

/// Audit of one model's predictions against one protected label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub protected_label: String,
    pub dir: Option<f64>,
    pub fn_diff: Option<f64>,
    pub fp_diff: Option<f64>,
    pub in_band: bool,
    /// Counts for the unprivileged (index 0) and privileged (index 1) groups.
    pub group_confusions: [GroupConfusion; 2],
    pub diagnostics: Vec<String>,
}

impl FairnessReport {
    pub fn from_predictions(predictions: &[u8], truth: &[u8], protected: &ProtectedLabeling) -> Result<Self> {
        let groups = group_confusions(predictions, truth, protected.values())?;
        for (g, label) in [(0, "unprivileged"), (1, "privileged")] {
            if groups[g].total() == 0 {
                return Err(Error::UndefinedMetric(format!(
                    "{}: {label} group is empty",
                    protected.name
                )));
            }
        }
        let odds = equalized_odds_from(&groups);
        let mut diagnostics = odds.diagnostics;
        let dir = match disparate_impact(predictions, protected.values()) {
            Ok(d) => Some(d),
            Err(Error::UndefinedMetric(msg)) => {
                diagnostics.push(msg);
                None
            }
            Err(e) => return Err(e),
        };
        Ok(Self {
            protected_label: protected.name.clone(),
            dir,
            fn_diff: odds.fn_diff,
            fp_diff: odds.fp_diff,
            in_band: dir.is_some_and(|d| (DIR_BAND.0..=DIR_BAND.1).contains(&d)),
            group_confusions: groups,
            diagnostics,
        })
    }

    pub fn audit(
        probabilities: &[f64],
        truth: &[u8],
        protected: &ProtectedLabeling,
        threshold: f64,
    ) -> Result<Self> {
        Self::from_predictions(&threshold_predictions(probabilities, threshold), truth, protected)
    }

    pub fn dir_from_confusions(&self) -> Option<f64> {
        let u = self.group_confusions[0].positive_rate()?;
        let p = self.group_confusions[1].positive_rate()?;
        (p > 0.0).then(|| u / p)
    }

    pub fn abs_gap(&self) -> Option<f64> {
        self.dir.map(fairness_transform)
    }
}

/// One exported audit row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub model: String,
    pub report: FairnessReport,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

pub const SIGN_CONVENTION: &str = "fn_diff and fp_diff are unprivileged minus privileged; FN rate = FN/(FN+TP), FP rate = FP/(FP+TN)";

pub fn write_audit_csv(path: &Path, records: &[AuditRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "protected_label", "model", "dir", "abs_gap", "fn_diff", "fp_diff", "in_band",
        "unpriv_tp", "unpriv_fp", "unpriv_tn", "unpriv_fn",
        "priv_tp", "priv_fp", "priv_tn", "priv_fn",
    ])?;
    for rec in records {
        let r = &rec.report;
        let [u, p] = r.group_confusions;
        w.write_record([
            r.protected_label.clone(),
            rec.model.clone(),
            opt(r.dir),
            opt(r.abs_gap()),
            opt(r.fn_diff),
            opt(r.fp_diff),
            r.in_band.to_string(),
            u.tp.to_string(), u.fp.to_string(), u.tn.to_string(), u.fn_.to_string(),
            p.tp.to_string(), p.fp.to_string(), p.tn.to_string(), p.fn_.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fixed-width table for terminals and markdown reports.
pub fn format_audit_table(records: &[AuditRecord]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "undef".to_string(), |x| format!("{x:.4}"));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<22} {:>8} {:>8} {:>8} {:>8}  band",
        "label", "model", "DIR", "|1-DIR|", "FN diff", "FP diff"
    );
    for rec in records {
        let r = &rec.report;
        let _ = writeln!(
            out,
            "{:<10} {:<22} {:>8} {:>8} {:>8} {:>8}  {}",
            r.protected_label,
            rec.model,
            fmt(r.dir),
            fmt(r.abs_gap()),
            fmt(r.fn_diff),
            fmt(r.fp_diff),
            if r.in_band { "ok" } else { "OUT" }
        );
    }
    out
}
