//! Experiment harness: task streams, sequential trainers for the five
//! methods, retention metrics, verification suites, and file I/O.

mod config;
mod export;
mod metrics;
mod runner;
mod stream;
mod verify;

pub use config::{load_config, ConfigFile, ReplayKind, RunConfig};
pub use export::{
    default_thresholds, export_results, summarize_method, write_summary, Aggregate, ExportFormat,
    MethodSummary, RecoveryTable, Summary,
};
pub use metrics::{
    compute_forgetting, steps_to_reconverge, ForgettingReport, ThresholdKind, ThresholdSpec,
};
pub use runner::run_continual;
pub use stream::{
    attach_targets, default_continual, default_model, default_replay, make_task_stream,
};
pub use verify::{run_verify, CheckOutcome, VerifyReport, VerifySuite};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Synthetic task-stream description; everything downstream is a pure
/// function of this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStreamSpec {
    pub family: StreamFamily,
    pub n_tasks: usize,
    /// Distance knob between task optima; zero makes every task identical.
    pub heterogeneity: f64,
    pub seed: u64,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
}

fn default_train_size() -> usize {
    2000
}

fn default_eval_size() -> usize {
    500
}

impl TaskStreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_tasks < 2 {
            return Err(Error::InvalidConfig("stream needs n_tasks >= 2".into()));
        }
        if self.heterogeneity.is_nan() || self.heterogeneity < 0.0 {
            return Err(Error::InvalidConfig("heterogeneity must be >= 0".into()));
        }
        if self.train_size == 0 || self.eval_size == 0 {
            return Err(Error::InvalidConfig(
                "train_size and eval_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamFamily {
    GaussianShift,
    SinusoidRegression,
    Mixture2DDiffusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Finetune,
    Ewc,
    Replay,
    TrustRegion,
    Ftml,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Finetune,
        Method::Ewc,
        Method::Replay,
        Method::TrustRegion,
        Method::Ftml,
    ];

    pub(crate) fn uses_anchors(self) -> bool {
        matches!(self, Method::Ewc | Method::TrustRegion)
    }

    pub(crate) fn uses_replay(self) -> bool {
        matches!(self, Method::Replay | Method::TrustRegion | Method::Ftml)
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Finetune => "Finetune",
            Method::Ewc => "Ewc",
            Method::Replay => "Replay",
            Method::TrustRegion => "TrustRegion",
            Method::Ftml => "Ftml",
        }
    }
}

/// One evaluation sweep over every task seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub task_in_training: usize,
    pub per_task_eval: BTreeMap<usize, f64>,
    /// Trust-region feasibility at this point, when a diagnostic radius is
    /// configured and anchors exist.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feasible: Option<bool>,
}

/// Everything needed to reproduce a run, embedded in its log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub method: Method,
    pub stream: TaskStreamSpec,
    pub model: crate::models::ModelSpec,
    pub continual: crate::continual::ContinualConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub meta: Option<crate::meta::MetaConfig>,
    pub replay: ReplayKind,
    pub eval_interval: usize,
    pub run_seed: u64,
    pub version: String,
}

/// Time-indexed per-task evaluation trace of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsLog {
    pub meta: RunMetadata,
    pub records: Vec<EvalRecord>,
    /// Global steps at which training switched to a new task.
    pub boundaries: Vec<usize>,
    /// Step at which a non-finite loss aborted the run, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diverged: Option<usize>,
    /// Anchors finalized over the run (anchor-based methods only).
    pub anchors_finalized: usize,
    /// Rank-1 eigenvalue ρ of each finalized anchor, in task order; `None`
    /// for non-rank-1 Fisher modes.
    pub anchor_rho: Vec<Option<f64>>,
    /// Replay registrations over the run (replay-based methods only).
    pub replay_registered: usize,
}

impl MetricsLog {
    pub fn final_record(&self) -> Result<&EvalRecord> {
        self.records
            .last()
            .ok_or_else(|| Error::InvalidValue("log holds no records".into()))
    }

    /// Mean eval loss over all tasks in the final record.
    pub fn final_average_eval(&self) -> Result<f64> {
        let last = self.final_record()?;
        let n = last.per_task_eval.len();
        if n == 0 {
            return Err(Error::InvalidValue(
                "final record holds no evaluations".into(),
            ));
        }
        Ok(last.per_task_eval.values().sum::<f64>() / n as f64)
    }
}
