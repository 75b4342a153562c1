//! Fairness-aware training and auditing for tabular binary classifiers.
//!
//! The crate trains small feedforward networks, audits them for disparate impact and
//! equalized-odds gaps, and mitigates bias by training a two-head multi-task network,
//! scoring its per-epoch snapshots with Monte-Carlo dropout, fine-tuning single-task models
//! from them, and choosing among the candidates on a performance/fairness Pareto front.
//! Reweighing is provided as a pre-processing baseline, and gradient saliency explains
//! which features each model relies on.

pub mod data;
pub mod error;
pub mod fairness;
pub mod matrix;
pub mod mc;
pub mod mtl;
pub mod metrics;
pub mod nn;
pub mod pareto;
pub mod pipeline;
pub mod reweighing;
pub mod saliency;
pub mod svg;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
