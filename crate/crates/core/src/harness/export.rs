//! Run-log export and the cross-method summary file.
//!
//! The CSV schema is fixed at `step,task_in_training,task_id,eval_loss`, one
//! row per task per record. Every writer is byte-stable: identical logs
//! produce identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::metrics::{compute_forgetting, steps_to_reconverge, ThresholdKind, ThresholdSpec};
use super::MetricsLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes the evaluation trace plus a `<stem>.meta.json` sidecar holding the
/// full run metadata.
pub fn export_results(log: &MetricsLog, path: &Path, format: ExportFormat) -> Result<()> {
    let body = match format {
        ExportFormat::Csv => {
            let mut out = String::from("step,task_in_training,task_id,eval_loss\n");
            for r in &log.records {
                for (task, loss) in &r.per_task_eval {
                    writeln!(out, "{},{},{},{}", r.step, r.task_in_training, task, loss)
                        .expect("string write");
                }
            }
            out
        }
        ExportFormat::Json => {
            serde_json::to_string_pretty(log).map_err(|e| Error::Serialize(e.to_string()))? + "\n"
        }
    };
    write_file(path, &body)?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        config: &'a super::RunMetadata,
        records: usize,
        diverged: Option<usize>,
    }
    let meta = serde_json::to_string_pretty(&Sidecar {
        config: &log.meta,
        records: log.records.len(),
        diverged: log.diverged,
    })
    .map_err(|e| Error::Serialize(e.to_string()))?
        + "\n";
    write_file(&sidecar_path(path), &meta)
}

/// Per-method aggregate mirroring the retention and re-convergence tables:
/// forgetting and final loss with seed-level spread, and lower-median
/// steps-to-reconverge for task 0 per threshold per transition (`null`
/// meaning no recovery).
#[derive(Debug, Clone, Serialize, Default)]
pub struct Summary {
    pub methods: BTreeMap<String, MethodSummary>,
}

/// Median recovery steps keyed task -> threshold -> transition
/// (null = never recovered before the next transition).
pub type RecoveryTable = BTreeMap<String, BTreeMap<String, BTreeMap<String, Option<usize>>>>;

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub seeds: Vec<u64>,
    pub final_avg_eval_loss: Aggregate,
    pub mean_forgetting: Aggregate,
    pub per_task_forgetting: BTreeMap<String, f64>,
    pub steps_to_reconverge: RecoveryTable,
    pub diverged_runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub stderr: f64,
    pub per_seed: Vec<f64>,
}

impl Aggregate {
    pub fn from_values(values: Vec<f64>) -> Aggregate {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Aggregate {
            mean,
            stderr: (var / n).sqrt(),
            per_seed: values,
        }
    }
}

/// Lower median with absent values treated as +inf; returns `None` when the
/// median itself is absent.
fn median_with_missing(mut values: Vec<Option<usize>>) -> Option<usize> {
    values.sort_by_key(|v| v.map_or(usize::MAX, |x| x));
    values[(values.len() - 1) / 2]
}

/// The recovery thresholds reported by default.
pub fn default_thresholds() -> Vec<(String, f64)> {
    vec![
        ("rel_increase_10pct".into(), 0.10),
        ("rel_increase_20pct".into(), 0.20),
        ("rel_increase_30pct".into(), 0.30),
    ]
}

/// Folds per-seed logs of one method into the summary.
pub fn summarize_method(summary: &mut Summary, label: &str, logs: &[MetricsLog]) -> Result<()> {
    if logs.is_empty() {
        return Err(Error::InvalidValue("no logs to summarize".into()));
    }
    let mut finals = Vec::new();
    let mut forgets = Vec::new();
    let mut per_task_sum: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut diverged = 0usize;
    for log in logs {
        if log.diverged.is_some() {
            diverged += 1;
            continue;
        }
        finals.push(log.final_average_eval()?);
        let f = compute_forgetting(log)?;
        forgets.push(f.mean);
        for (t, v) in f.per_task {
            let e = per_task_sum.entry(t).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    if finals.is_empty() {
        return Err(Error::NumericalDivergence { step: 0 });
    }

    // recovery of every task at every transition after it was first
    // learned: transition i leads into task i + 1, so tasks 0..=i are old
    let clean: Vec<&MetricsLog> = logs.iter().filter(|l| l.diverged.is_none()).collect();
    let tasks: Vec<usize> = clean[0]
        .final_record()?
        .per_task_eval
        .keys()
        .copied()
        .collect();
    let mut steps: RecoveryTable = BTreeMap::new();
    for &task in &tasks {
        let mut per_threshold = BTreeMap::new();
        for (label, tau) in default_thresholds() {
            let mut per_transition: BTreeMap<String, Vec<Option<usize>>> = BTreeMap::new();
            for log in &clean {
                let baseline = ThresholdSpec::baseline_from_log(log, task)?;
                let thr = ThresholdSpec {
                    kind: ThresholdKind::RelativeIncrease { tau },
                    baseline,
                };
                for (i, &b) in log.boundaries.iter().enumerate().skip(task) {
                    let entry = per_transition
                        .entry(format!("after_task_{}", i + 1))
                        .or_default();
                    entry.push(steps_to_reconverge(log, task, b, &thr)?);
                }
            }
            per_threshold.insert(
                label,
                per_transition
                    .into_iter()
                    .map(|(k, v)| (k, median_with_missing(v)))
                    .collect(),
            );
        }
        steps.insert(format!("task_{task}"), per_threshold);
    }

    summary.methods.insert(
        label.to_string(),
        MethodSummary {
            seeds: logs.iter().map(|l| l.meta.run_seed).collect(),
            final_avg_eval_loss: Aggregate::from_values(finals),
            mean_forgetting: Aggregate::from_values(forgets),
            per_task_forgetting: per_task_sum
                .into_iter()
                .map(|(t, (s, n))| (format!("task_{t}"), s / n as f64))
                .collect(),
            steps_to_reconverge: steps,
            diverged_runs: diverged,
        },
    );
    Ok(())
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    let body =
        serde_json::to_string_pretty(summary).map_err(|e| Error::Serialize(e.to_string()))? + "\n";
    write_file(path, &body)
}
