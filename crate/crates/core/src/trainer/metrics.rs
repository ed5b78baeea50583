use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::TrainObserver;
use crate::corpus::Split;
use crate::error::Result;
use crate::model::ToyTextClassifier;

pub const METRICS_HEADER: &str = "step,phase,split,accuracy,loss,lambda_mean";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Step1,
    Step2,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Step1 => "step1",
            Phase::Step2 => "step2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Optimizer steps taken in this phase so far.
    pub step: usize,
    pub phase: Phase,
    pub split: Split,
    pub accuracy: f64,
    pub loss: f64,
    /// Mean mixing ratio since the previous evaluation (step two only).
    pub lambda_mean: Option<f64>,
}

impl EvalRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step,
            self.phase,
            self.split,
            self.accuracy,
            self.loss,
            self.lambda_mean.map(|l| l.to_string()).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub records: Vec<EvalRecord>,
    /// Index into `records` of the best validation evaluation.
    pub best: Option<usize>,
    /// Mean training-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub elapsed: Duration,
}

impl RunMetrics {
    pub fn best_record(&self) -> Option<&EvalRecord> {
        self.best.map(|i| &self.records[i])
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.best_record().map(|r| r.accuracy)
    }
}

/// Streams evaluations to `metrics.csv` and the best model so far to
/// `best.ckpt` inside a run directory.
pub struct MetricsCsv {
    file: fs::File,
    checkpoint: PathBuf,
    best: Option<f64>,
}

impl MetricsCsv {
    pub const FILE: &'static str = "metrics.csv";
    pub const CHECKPOINT: &'static str = "best.ckpt";

    pub fn create(dir: &Path) -> Result<Self> {
        let mut file = fs::File::create(dir.join(Self::FILE))?;
        writeln!(file, "{METRICS_HEADER}")?;
        Ok(Self {
            file,
            checkpoint: dir.join(Self::CHECKPOINT),
            best: None,
        })
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.best
    }
}

impl TrainObserver for MetricsCsv {
    fn on_eval(&mut self, record: &EvalRecord) -> Result<()> {
        writeln!(self.file, "{}", record.csv_row())?;
        Ok(())
    }

    fn on_best(&mut self, model: &ToyTextClassifier, record: &EvalRecord) -> Result<()> {
        if self.best.is_none_or(|b| record.accuracy > b) {
            self.best = Some(record.accuracy);
            model.save(&self.checkpoint)?;
        }
        Ok(())
    }
}
