//! Tabular datasets: the in-memory [`Dataset`], ADULT ingestion, a synthetic biased-data
//! generator and the on-disk dataset container.

mod adult;
mod synthetic;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::ProtectedLabeling;
use crate::matrix::Matrix;
use crate::nn::stream_rng;

pub use adult::{ingest_adult, AdultConfig, AdultIngest, Vocabulary, ADULT_FEATURES, ADULT_PROTECTED};
pub use synthetic::{generate_synthetic, SyntheticSpec, SYNTHETIC_PROTECTED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Encoded features, binary target, binarized protected labels and optional sample weights.
///
/// Protected columns never appear among the features. Reads of protected labels go through
/// [`Dataset::protected`] and are counted, so callers can assert a stage never touched them.
#[derive(Debug)]
pub struct Dataset {
    features: Matrix,
    feature_names: Vec<String>,
    target: Vec<u8>,
    protected: BTreeMap<String, ProtectedLabeling>,
    sample_weights: Option<Vec<f64>>,
    split: Split,
    protected_reads: AtomicUsize,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Self {
            features: self.features.clone(),
            feature_names: self.feature_names.clone(),
            target: self.target.clone(),
            protected: self.protected.clone(),
            sample_weights: self.sample_weights.clone(),
            split: self.split,
            protected_reads: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
            && self.feature_names == other.feature_names
            && self.target == other.target
            && self.protected == other.protected
            && self.sample_weights == other.sample_weights
            && self.split == other.split
    }
}

impl Dataset {
    pub fn new(
        features: Matrix,
        feature_names: Vec<String>,
        target: Vec<u8>,
        protected: Vec<ProtectedLabeling>,
        split: Split,
    ) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if target.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} rows", target.len())));
        }
        if target.iter().any(|t| *t > 1) {
            return Err(Error::Data("target labels must be 0/1".into()));
        }
        if !features.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::Data("feature matrix contains non-finite values".into()));
        }
        let mut map = BTreeMap::new();
        for p in protected {
            if p.len() != n {
                return Err(Error::Shape(format!(
                    "protected label '{}' has {} values for {n} rows",
                    p.name,
                    p.len()
                )));
            }
            if feature_names.contains(&p.name) {
                return Err(Error::Config(format!(
                    "protected label '{}' is also an input feature",
                    p.name
                )));
            }
            map.insert(p.name.clone(), p);
        }
        Ok(Self {
            features,
            feature_names,
            target,
            protected: map,
            sample_weights: None,
            split,
            protected_reads: AtomicUsize::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target(&self) -> &[u8] {
        &self.target
    }

    pub fn target_f64(&self) -> Vec<f64> {
        self.target.iter().map(|&t| f64::from(t)).collect()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn sample_weights(&self) -> Option<&[f64]> {
        self.sample_weights.as_deref()
    }

    pub fn with_sample_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} sample weights for {} rows",
                weights.len(),
                self.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Data("sample weights must be finite and nonnegative".into()));
        }
        self.sample_weights = Some(weights);
        Ok(self)
    }

    pub fn without_sample_weights(mut self) -> Self {
        self.sample_weights = None;
        self
    }

    pub fn protected_names(&self) -> impl Iterator<Item = &str> {
        self.protected.keys().map(String::as_str)
    }

    pub fn has_protected(&self, name: &str) -> bool {
        self.protected.contains_key(name)
    }

    /// Protected labels by name. Every call is counted.
    pub fn protected(&self, name: &str) -> Result<&ProtectedLabeling> {
        self.protected_reads.fetch_add(1, Ordering::Relaxed);
        self.protected
            .get(name)
            .ok_or_else(|| Error::Config(format!("dataset has no protected label '{name}'")))
    }

    pub fn protected_read_count(&self) -> usize {
        self.protected_reads.load(Ordering::Relaxed)
    }

    /// Rows at `indices`, in order.
    pub fn subset(&self, indices: &[usize], split: Split) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            feature_names: self.feature_names.clone(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            protected: self
                .protected
                .iter()
                .map(|(k, v)| (k.clone(), v.select(indices)))
                .collect(),
            sample_weights: self
                .sample_weights
                .as_ref()
                .map(|w| indices.iter().map(|&i| w[i]).collect()),
            split,
            protected_reads: AtomicUsize::new(0),
        }
    }

    /// Seeded shuffle, then the first `floor(train_fraction * n)` rows become the training split.
    pub fn train_test_split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut stream_rng(seed, 0x5311));
        let n_train = (train_fraction * self.len() as f64).floor() as usize;
        if n_train == 0 || n_train == self.len() {
            return Err(Error::Data("split leaves an empty partition".into()));
        }
        Ok((
            self.subset(&order[..n_train], Split::Train),
            self.subset(&order[n_train..], Split::Test),
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DatasetFile {
            format: DATASET_FORMAT.to_string(),
            version: DATASET_VERSION,
            split: self.split,
            rows: self.len(),
            feature_names: self.feature_names.clone(),
            features: self.features.as_slice().to_vec(),
            target: self.target.clone(),
            protected: self.protected.values().cloned().collect(),
            sample_weights: self.sample_weights.clone(),
        };
        let bytes = serde_json::to_vec(&file)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: DatasetFile = serde_json::from_slice(&bytes)?;
        if file.format != DATASET_FORMAT || file.version != DATASET_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported dataset container {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        let features = Matrix::new(file.rows, file.feature_names.len(), file.features)?;
        let ds = Dataset::new(features, file.feature_names, file.target, file.protected, file.split)?;
        match file.sample_weights {
            Some(w) => ds.with_sample_weights(w),
            None => Ok(ds),
        }
    }
}

const DATASET_FORMAT: &str = "fairmtl-dataset";
const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    split: Split,
    rows: usize,
    feature_names: Vec<String>,
    features: Vec<f64>,
    target: Vec<u8>,
    protected: Vec<ProtectedLabeling>,
    sample_weights: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::BinarizationRule;

    fn tiny() -> Dataset {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let g = ProtectedLabeling::new("sex", vec![0, 1, 1], BinarizationRule::Binary).unwrap();
        Dataset::new(x, vec!["a".into(), "b".into()], vec![0, 1, 1], vec![g], Split::Train).unwrap()
    }

    #[test]
    fn leakage_guard_rejects_protected_feature() {
        let x = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let g = ProtectedLabeling::new("sex", vec![1, 0], BinarizationRule::Binary).unwrap();
        let err = Dataset::new(x, vec!["sex".into()], vec![1, 0], vec![g], Split::Train).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        let empty = Matrix::new(0, 1, vec![]).unwrap();
        assert!(Dataset::new(empty, vec!["a".into()], vec![], vec![], Split::Train).is_err());
        let x = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(Dataset::new(x, vec!["a".into()], vec![0], vec![], Split::Train).is_err());
    }

    #[test]
    fn protected_reads_are_counted() {
        let ds = tiny();
        assert_eq!(ds.protected_read_count(), 0);
        ds.protected("sex").unwrap();
        assert!(ds.protected("race").is_err());
        assert_eq!(ds.protected_read_count(), 2);
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        let ds = tiny().with_sample_weights(vec![0.1, 1.0 / 3.0, 2.5]).unwrap();
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn split_is_seeded_and_sized() {
        let x = Matrix::new(10, 1, (0..10).map(f64::from).collect()).unwrap();
        let ds = Dataset::new(x, vec!["a".into()], vec![0; 10], vec![], Split::Train).unwrap();
        let (tr, te) = ds.train_test_split(0.75, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        let (tr2, _) = ds.train_test_split(0.75, 3).unwrap();
        assert_eq!(tr, tr2);
    }
}
