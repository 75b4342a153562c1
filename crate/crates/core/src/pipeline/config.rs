use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SyntheticSpec, ADULT_PROTECTED, SYNTHETIC_PROTECTED};
use crate::error::{Error, Result};
use crate::mtl::{FinetuneConfig, LossWeights, MtlArch, MtlTrainConfig};
use crate::nn::{AdamConfig, LossSpec};
use crate::pareto::SelectionPolicy;
use crate::saliency::{Normalization, SaliencyTarget};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Adult,
    Synthetic,
}

/// Flat experiment configuration. Every key has a default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub adult_path: PathBuf,
    pub synthetic_samples: usize,
    pub synthetic_features: usize,
    pub bias_strength: f64,
    pub positive_rate: f64,
    pub separation: f64,
    pub train_fraction: f64,
    /// Protected labels to audit and mitigate; empty means every label the dataset carries.
    pub protected_labels: Vec<String>,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub baseline_epochs: usize,
    pub cv_folds: usize,
    pub mtl_epochs: usize,
    pub target_weight: f64,
    pub protected_weight: f64,
    pub finetune_epochs: usize,
    pub finetune_head_only: bool,
    pub summary_passes: usize,
    pub report_passes: usize,
    pub pareto_policy: SelectionPolicy,
    pub threshold: f64,
    pub saliency_target: SaliencyTarget,
    pub saliency_normalization: Normalization,
    pub save_snapshots: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Adult,
            adult_path: PathBuf::from("data/adult.csv"),
            synthetic_samples: 4000,
            synthetic_features: 4,
            bias_strength: 0.8,
            positive_rate: 0.5,
            separation: 2.0,
            train_fraction: 0.75,
            protected_labels: Vec::new(),
            seed: 0,
            hidden: vec![32, 16],
            dropout_rate: 0.25,
            batch_size: 64,
            learning_rate: 1e-3,
            baseline_epochs: 20,
            cv_folds: 3,
            mtl_epochs: 100,
            target_weight: 4.5,
            protected_weight: 0.25,
            finetune_epochs: 10,
            finetune_head_only: false,
            summary_passes: 30,
            report_passes: 100,
            pareto_policy: SelectionPolicy::BestFairness,
            threshold: crate::fairness::DEFAULT_THRESHOLD,
            saliency_target: SaliencyTarget::Score,
            saliency_normalization: Normalization::SumToOne,
            save_snapshots: true,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden must list at least one positive layer width".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if self.summary_passes == 0 || self.report_passes == 0 {
            return bad("Monte-Carlo pass counts must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        self.loss_weights()?.check_priority()?;
        if self.dataset == DatasetKind::Synthetic {
            self.synthetic_spec().validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding `out_dir`, which names where results
    /// go rather than what they are.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn resolved_labels(&self) -> Vec<String> {
        if !self.protected_labels.is_empty() {
            return self.protected_labels.clone();
        }
        match self.dataset {
            DatasetKind::Adult => ADULT_PROTECTED.iter().map(|s| s.to_string()).collect(),
            DatasetKind::Synthetic => vec![SYNTHETIC_PROTECTED.to_string()],
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: self.synthetic_samples,
            n_features: self.synthetic_features,
            bias_strength: self.bias_strength,
            positive_rate: self.positive_rate,
            separation: self.separation,
            train_fraction: self.train_fraction,
            seed: self.seed,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn loss_weights(&self) -> Result<LossWeights> {
        LossWeights::new(self.target_weight, self.protected_weight)
    }

    pub fn arch(&self) -> MtlArch {
        MtlArch {
            hidden: self.hidden.clone(),
            dropout_rate: self.dropout_rate,
            dropout_after: None,
        }
    }

    pub fn baseline_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.baseline_epochs,
            batch_size: self.batch_size,
            adam: self.adam(),
            loss: LossSpec::bce(),
            seed: self.seed,
            trainable_from: 0,
        }
    }

    pub fn mtl_train(&self, protected_label: &str) -> Result<MtlTrainConfig> {
        Ok(MtlTrainConfig {
            protected_label: protected_label.to_string(),
            arch: self.arch(),
            weights: self.loss_weights()?,
            epochs: self.mtl_epochs,
            batch_size: self.batch_size,
            adam: self.adam(),
            seed: self.seed,
            summary_passes: self.summary_passes,
            validation_fraction: 0.1,
        })
    }

    pub fn finetune(&self) -> FinetuneConfig {
        FinetuneConfig {
            epochs: self.finetune_epochs,
            batch_size: self.batch_size,
            adam: self.adam(),
            head_only: self.finetune_head_only,
            threshold: self.threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"epochz": 3}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("epochz"));
    }

    #[test]
    fn priority_is_enforced() {
        let err = ExperimentConfig::from_json(r#"{"target_weight": 1.0, "protected_weight": 1.0}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn hash_ignores_output_location_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        let c = ExperimentConfig { seed: 1, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn labels_default_per_dataset() {
        let cfg = ExperimentConfig {
            dataset: DatasetKind::Synthetic,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.resolved_labels(), vec!["group"]);
        assert_eq!(ExperimentConfig::default().resolved_labels(), vec!["age", "race", "sex"]);
    }
}
