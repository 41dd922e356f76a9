//! Datasets, metrics, the optimizer and the training loop.

mod data;
mod metrics;
mod optim;
mod trainer;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::KernelError;

pub use data::{load_dataset, read_dataset, write_dataset, LabelSet, LabeledExample};
pub use metrics::{macro_f1, mean_std, F1Report, MetricMode};
pub use optim::{clip_grad_norm, AdamW, AdamWConfig};
pub use trainer::{
    evaluate, score_set, train, EpochRecord, EvalReport, Prediction, PreparedExample, TrainConfig, TrainLog, TrainOutcome,
    ValidationRecord,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("expected header text,target,label, found {0:?}")]
    BadHeader(String),
    #[error("row {row}: unknown label {value:?}")]
    BadLabel { row: usize, value: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("{preds} predictions but {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("example set is empty")]
    EmptySet,
    #[error("non-finite loss or parameters at batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Summary written next to predictions after evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub mode: MetricMode,
    pub per_class_f1: BTreeMap<String, f64>,
    pub f_avg: f64,
    pub accuracy: f64,
    pub absent_classes: Vec<String>,
    /// `f_avg` per target.
    pub per_target: BTreeMap<String, f64>,
    /// `f_avg` of every trial, in trial order.
    pub trials: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub config_fingerprint: String,
}

impl MetricsFile {
    /// `report` is the evaluation of the first trial; `trials` holds every
    /// trial's score.
    pub fn new(report: &EvalReport, mode: MetricMode, trials: Vec<f64>, config_fingerprint: &str) -> Self {
        let r = report.report(mode);
        let (mean, std) = mean_std(&trials);
        Self {
            mode,
            per_class_f1: r.per_class_f1.clone(),
            f_avg: r.f_avg,
            accuracy: r.accuracy,
            absent_classes: r.absent_classes.clone(),
            per_target: report.per_target.iter().map(|(t, r)| (t.clone(), r.f_avg)).collect(),
            trials,
            mean,
            std,
            config_fingerprint: config_fingerprint.to_string(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let mut text = serde_json::to_string_pretty(self).expect("metrics serialize");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| TrainError::Io(e.to_string()))
    }
}

/// One JSON object per line.
pub fn write_predictions(path: impl AsRef<Path>, predictions: &[Prediction]) -> Result<(), TrainError> {
    let mut out = Vec::new();
    for p in predictions {
        serde_json::to_writer(&mut out, p).expect("prediction serializes");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| TrainError::Io(e.to_string()))?;
    f.write_all(&out).map_err(|e| TrainError::Io(e.to_string()))
}
