//! Retention metrics over run logs: forgetting and steps-to-reconverge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::MetricsLog;

/// Signed forgetting per task: final eval minus the best eval recorded while
/// the task was in training. Negative values are backward transfer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub per_task: BTreeMap<usize, f64>,
    pub mean: f64,
}

pub fn compute_forgetting(log: &MetricsLog) -> Result<ForgettingReport> {
    let last = log.final_record()?;
    let mut per_task = BTreeMap::new();
    for (&task, &final_eval) in &last.per_task_eval {
        let best = log
            .records
            .iter()
            .filter(|r| r.task_in_training == task)
            .filter_map(|r| r.per_task_eval.get(&task))
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(Error::UnknownTask(task));
        }
        per_task.insert(task, final_eval - best);
    }
    if per_task.is_empty() {
        return Err(Error::InvalidValue("log holds no evaluated tasks".into()));
    }
    let mean = per_task.values().sum::<f64>() / per_task.len() as f64;
    Ok(ForgettingReport { per_task, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdKind {
    /// Loss-style target (lower is better): met when
    /// eval ≤ (1 + tau) · baseline.
    RelativeIncrease { tau: f64 },
    /// Score-style target on the negated loss (higher is better): met when
    /// -eval ≥ alpha_frac · (-baseline).
    RelativeFraction { alpha_frac: f64 },
}

/// A recovery target relative to the task's best eval at first learning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub kind: ThresholdKind,
    pub baseline: f64,
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ThresholdKind::RelativeIncrease { tau } if tau < 0.0 => {
                Err(Error::InvalidValue("tau must be >= 0".into()))
            }
            ThresholdKind::RelativeFraction { alpha_frac }
                if !(alpha_frac > 0.0 && alpha_frac <= 1.0) =>
            {
                Err(Error::InvalidValue("alpha_frac must lie in (0, 1]".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn met(&self, eval: f64) -> bool {
        match self.kind {
            ThresholdKind::RelativeIncrease { tau } => eval <= (1.0 + tau) * self.baseline,
            ThresholdKind::RelativeFraction { alpha_frac } => -eval >= alpha_frac * -self.baseline,
        }
    }

    /// Baseline from the log itself: the task's best eval while it was being
    /// trained.
    pub fn baseline_from_log(log: &MetricsLog, task_id: usize) -> Result<f64> {
        let best = log
            .records
            .iter()
            .filter(|r| r.task_in_training == task_id)
            .filter_map(|r| r.per_task_eval.get(&task_id))
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::UnknownTask(task_id))
        }
    }
}

/// Smallest `step - transition_step` at which the task's eval meets the
/// threshold, scanning only records of the task segment that begins at the
/// transition. `None` reproduces the "--" outcome: no recovery before the
/// next transition (or end of log).
pub fn steps_to_reconverge(
    log: &MetricsLog,
    task_id: usize,
    transition_step: usize,
    thr: &ThresholdSpec,
) -> Result<Option<usize>> {
    thr.validate()?;
    if !log.boundaries.contains(&transition_step) {
        return Err(Error::InvalidValue(format!(
            "{transition_step} is not a task boundary"
        )));
    }
    let mut window = log
        .records
        .iter()
        .filter(|r| r.step > transition_step)
        .peekable();
    let training = match window.peek() {
        Some(r) => r.task_in_training,
        None => return Ok(None),
    };
    for r in window.take_while(|r| r.task_in_training == training) {
        let eval = r
            .per_task_eval
            .get(&task_id)
            .ok_or(Error::UnknownTask(task_id))?;
        if thr.met(*eval) {
            return Ok(Some(r.step - transition_step));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{EvalRecord, RunMetadata, StreamFamily, TaskStreamSpec};
    use proptest::prelude::*;

    type TraceRow<'a> = (usize, usize, &'a [(usize, f64)]);

    fn synthetic_log(trace: &[TraceRow], boundaries: &[usize]) -> MetricsLog {
        let records = trace
            .iter()
            .map(|(step, training, evals)| EvalRecord {
                step: *step,
                task_in_training: *training,
                per_task_eval: evals.iter().cloned().collect(),
                feasible: None,
            })
            .collect();
        MetricsLog {
            meta: RunMetadata {
                method: crate::harness::Method::Finetune,
                stream: TaskStreamSpec {
                    family: StreamFamily::GaussianShift,
                    n_tasks: 2,
                    heterogeneity: 0.0,
                    seed: 0,
                    train_size: 1,
                    eval_size: 1,
                },
                model: crate::models::ModelSpec::GaussianMean { dim: 2 },
                continual: Default::default(),
                meta: None,
                replay: crate::harness::ReplayKind::Buffer {
                    capacity_per_task: 1,
                },
                eval_interval: 10,
                run_seed: 0,
                version: "test".into(),
            },
            records,
            boundaries: boundaries.to_vec(),
            diverged: None,
            anchors_finalized: 0,
            anchor_rho: Vec::new(),
            replay_registered: 0,
        }
    }

    #[test]
    fn constant_trace_has_zero_forgetting() {
        let log = synthetic_log(
            &[
                (10, 0, &[(0, 1.0)]),
                (20, 1, &[(0, 1.0), (1, 2.0)]),
                (30, 1, &[(0, 1.0), (1, 2.0)]),
            ],
            &[20],
        );
        let f = compute_forgetting(&log).unwrap();
        assert_eq!(f.per_task[&0], 0.0);
    }

    #[test]
    fn forgetting_is_final_minus_best() {
        let log = synthetic_log(
            &[
                (10, 0, &[(0, 1.0)]),
                (20, 1, &[(0, 2.5), (1, 0.5)]),
                (30, 1, &[(0, 3.0), (1, 0.4)]),
            ],
            &[20],
        );
        let f = compute_forgetting(&log).unwrap();
        assert_eq!(f.per_task[&0], 2.0);
    }

    #[test]
    fn negative_forgetting_is_allowed() {
        let log = synthetic_log(
            &[(10, 0, &[(0, 2.0)]), (20, 1, &[(0, 1.5), (1, 1.0)])],
            &[10],
        );
        let f = compute_forgetting(&log).unwrap();
        assert_eq!(f.per_task[&0], -0.5);
    }

    #[test]
    fn reconverge_at_first_record_counts_one_interval() {
        let log = synthetic_log(
            &[
                (10, 0, &[(0, 1.0)]),
                (20, 1, &[(0, 1.05), (1, 9.0)]),
                (30, 1, &[(0, 1.0), (1, 5.0)]),
            ],
            &[10],
        );
        let thr = ThresholdSpec {
            kind: ThresholdKind::RelativeIncrease { tau: 0.10 },
            baseline: 1.0,
        };
        assert_eq!(steps_to_reconverge(&log, 0, 10, &thr).unwrap(), Some(10));
    }

    #[test]
    fn never_meeting_threshold_is_none() {
        let log = synthetic_log(
            &[
                (10, 0, &[(0, 1.0)]),
                (20, 1, &[(0, 5.0), (1, 1.0)]),
                (30, 1, &[(0, 5.0), (1, 1.0)]),
            ],
            &[10],
        );
        let thr = ThresholdSpec {
            kind: ThresholdKind::RelativeIncrease { tau: 0.30 },
            baseline: 1.0,
        };
        assert_eq!(steps_to_reconverge(&log, 0, 10, &thr).unwrap(), None);
    }

    #[test]
    fn crossing_at_fifth_record_counts_fifty_steps() {
        let mut trace: Vec<TraceRow> = vec![(10, 0, &[(0, 1.0)])];
        static HIGH: [(usize, f64); 2] = [(0, 9.0), (1, 1.0)];
        static LOW: [(usize, f64); 2] = [(0, 1.0), (1, 1.0)];
        for k in 1..=4 {
            trace.push((10 + 10 * k, 1, &HIGH));
        }
        trace.push((60, 1, &LOW));
        let log = synthetic_log(&trace, &[10]);
        let thr = ThresholdSpec {
            kind: ThresholdKind::RelativeIncrease { tau: 0.2 },
            baseline: 1.0,
        };
        assert_eq!(steps_to_reconverge(&log, 0, 10, &thr).unwrap(), Some(50));
    }

    #[test]
    fn window_stops_at_next_transition() {
        // recovery happens only after the second transition; the first
        // window must report none
        let log = synthetic_log(
            &[
                (10, 0, &[(0, 1.0)]),
                (20, 1, &[(0, 9.0), (1, 1.0)]),
                (30, 2, &[(0, 1.0), (1, 1.0), (2, 1.0)]),
            ],
            &[10, 20],
        );
        let thr = ThresholdSpec {
            kind: ThresholdKind::RelativeIncrease { tau: 0.2 },
            baseline: 1.0,
        };
        assert_eq!(steps_to_reconverge(&log, 0, 10, &thr).unwrap(), None);
        assert_eq!(steps_to_reconverge(&log, 0, 20, &thr).unwrap(), Some(10));
    }

    #[test]
    fn unknown_transition_errors() {
        let log = synthetic_log(&[(10, 0, &[(0, 1.0)])], &[]);
        let thr = ThresholdSpec {
            kind: ThresholdKind::RelativeIncrease { tau: 0.2 },
            baseline: 1.0,
        };
        assert!(steps_to_reconverge(&log, 0, 7, &thr).is_err());
    }

    #[test]
    fn relative_fraction_on_positive_scores() {
        // baseline score 2.0 (eval -2.0), alpha 0.9 target: score >= 1.8
        let thr = ThresholdSpec {
            kind: ThresholdKind::RelativeFraction { alpha_frac: 0.9 },
            baseline: -2.0,
        };
        assert!(thr.met(-1.9));
        assert!(!thr.met(-1.7));
    }

    proptest! {
        #[test]
        fn looser_thresholds_never_take_longer(
            evals in proptest::collection::vec(0.5f64..5.0, 1..20),
            tau_a in 0.0f64..0.5,
            extra in 0.0f64..0.5,
        ) {
            type OwnedRow = (usize, usize, Vec<(usize, f64)>);
            let trace: Vec<OwnedRow> = std::iter::once((10usize, 0usize, vec![(0usize, 1.0f64)]))
                .chain(evals.iter().enumerate().map(|(k, &e)| (20 + 10 * k, 1, vec![(0, e), (1, 1.0)])))
                .collect();
            let records = trace
                .iter()
                .map(|(step, training, evals)| EvalRecord {
                    step: *step,
                    task_in_training: *training,
                    per_task_eval: evals.iter().cloned().collect(),
                    feasible: None,
                })
                .collect::<Vec<_>>();
            let mut log = synthetic_log(&[], &[10]);
            log.records = records;
            let tight = ThresholdSpec { kind: ThresholdKind::RelativeIncrease { tau: tau_a }, baseline: 1.0 };
            let loose = ThresholdSpec { kind: ThresholdKind::RelativeIncrease { tau: tau_a + extra }, baseline: 1.0 };
            let st = steps_to_reconverge(&log, 0, 10, &tight).unwrap();
            let sl = steps_to_reconverge(&log, 0, 10, &loose).unwrap();
            match (st, sl) {
                (Some(a), Some(b)) => prop_assert!(b <= a),
                (Some(_), None) => prop_assert!(false, "loose threshold missed a recovery the tight one found"),
                _ => {}
            }
        }
    }
}
