//! End-to-end experiment stages: ingest, baseline, audit, mitigation, reweighing,
//! saliency and the consolidated report.
//!
//! Every stage reads and writes artifacts under one output directory. Machine-readable
//! outputs depend only on the configuration; wall-clock timings go to `timings.json`.

mod config;
mod report;
mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub use config::{DatasetKind, ExperimentConfig};
pub use report::{report, Report};
pub use stages::{
    audit, explain, ingest, mitigate, reweigh, train_baseline, AuditSummary, BaselineSummary,
    CandidateMetrics, ExplainSummary, IngestSummary, MitigationSummary, ReweighSummary,
};

const MANIFEST: &str = "manifest.json";
const TIMINGS: &str = "timings.json";
const CONFIG: &str = "config.json";
const MANIFEST_FORMAT: &str = "fairmtl-run";

/// Artifacts and summary of one completed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub artifacts: Vec<String>,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub config_hash: String,
    /// Keyed by stage name, e.g. `mitigate/sex`.
    pub stages: BTreeMap<String, StageRecord>,
    pub timings_file: String,
}

/// An output directory bound to one configuration.
#[derive(Debug)]
pub struct Run {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    hash: String,
    threads: usize,
    verbose: bool,
}

impl Run {
    /// Binds `config` to its `out_dir`, refusing a directory that already holds results of a
    /// different configuration.
    pub fn open(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let out = config.out_dir.clone();
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let hash = config.hash();
        let manifest_path = out.join(MANIFEST);
        if manifest_path.exists() {
            let existing: RunManifest = read_json(&manifest_path)?;
            if existing.config_hash != hash {
                return Err(Error::Config(format!(
                    "{} holds results for config {}, not {hash}",
                    out.display(),
                    existing.config_hash
                )));
            }
        }
        let run = Self {
            config,
            out,
            hash,
            threads: 0,
            verbose: false,
        };
        run.write_json(CONFIG, &run.config)?;
        Ok(run)
    }

    /// Worker threads for parallel stages; 0 lets the pool decide.
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_verbose(mut self, verbose: bool) -> Self {
        self.verbose = verbose;
        self
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub(crate) fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[fairmtl] {}", msg.as_ref());
        }
    }

    pub(crate) fn ensure_dir(&self, rel: &str) -> Result<PathBuf> {
        let dir = self.path(rel);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    pub(crate) fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        write_json(&self.path(rel), value)
    }

    pub(crate) fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        let path = self.path(rel);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub(crate) fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T> {
        read_json(&self.path(rel))
    }

    /// Loads an artifact written by an earlier stage, naming that stage when it is absent.
    pub(crate) fn require(&self, rel: &str, stage: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::Data(format!(
                "{} is missing; run the {stage} stage first",
                path.display()
            )))
        }
    }

    pub(crate) fn load_splits(&self) -> Result<(Dataset, Dataset)> {
        let train = Dataset::load(&self.require("data/train.json", "ingest")?)?;
        let test = Dataset::load(&self.require("data/test.json", "ingest")?)?;
        Ok((train, test))
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        let path = self.path(MANIFEST);
        if path.exists() {
            read_json(&path)
        } else {
            Ok(RunManifest {
                format: MANIFEST_FORMAT.into(),
                config_hash: self.hash.clone(),
                stages: BTreeMap::new(),
                timings_file: TIMINGS.into(),
            })
        }
    }

    /// Records a finished stage; every listed artifact must exist.
    pub(crate) fn record<T: Serialize>(&self, stage: &str, artifacts: Vec<String>, summary: &T, seconds: f64) -> Result<()> {
        if let Some(missing) = artifacts.iter().find(|a| !self.path(a).exists()) {
            return Err(Error::Contract(format!("stage {stage} did not produce {missing}")));
        }
        let mut manifest = self.manifest()?;
        manifest.stages.insert(
            stage.to_string(),
            StageRecord {
                artifacts,
                summary: serde_json::to_value(summary)?,
            },
        );
        self.write_json(MANIFEST, &manifest)?;
        let tpath = self.path(TIMINGS);
        let mut timings: BTreeMap<String, f64> = if tpath.exists() { read_json(&tpath)? } else { BTreeMap::new() };
        timings.insert(stage.to_string(), seconds);
        write_json(&tpath, &timings)
    }

    /// Runs `f` on this run's thread pool.
    pub(crate) fn install<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(f)
    }

    /// Every stage in order, for every configured protected label.
    pub fn run_all(&self) -> Result<Report> {
        ingest(self)?;
        train_baseline(self)?;
        audit(self)?;
        for label in self.config.resolved_labels() {
            mitigate(self, &label)?;
            reweigh(self, &label)?;
            explain(self, &label)?;
        }
        report(self)
    }
}

pub(crate) struct Timer(Instant);

impl Timer {
    pub(crate) fn start() -> Self {
        Self(Instant::now())
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
