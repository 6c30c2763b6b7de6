//! Sequential training over a task stream.
//!
//! One engine drives all five methods. Finetune, Ewc, Replay and TrustRegion
//! share the fused trust-region step with terms switched off per method;
//! Ftml takes online-meta steps on one uniformly sampled task at a time.
//! Every random draw comes from a purpose-keyed stream, so two methods whose
//! active terms coincide produce bit-identical trajectories.

use crate::continual::{finalize_task, trust_region_feasible, trust_region_step, TaskAnchor};
use crate::curvature::Curvature;
use crate::error::{Error, Result};
use crate::meta::ftml_step;
use crate::models::{ModelSpec, Params, Sample, TaskDataset};
use crate::replay::{BatchSource, GenerativeReplaySource, ReplayBuffer};
use crate::rng::{derive, purpose, stream};

use rand::Rng;

use super::config::{ReplayKind, RunConfig};
use super::{EvalRecord, Method, MetricsLog, RunMetadata, StreamFamily, TaskStreamSpec};

/// Draws a batch uniformly with replacement from a slice.
fn draw_batch(data: &[Sample], n: usize, parts: &[u64]) -> Vec<Sample> {
    let mut rng = stream(parts);
    (0..n)
        .map(|_| data[rng.random_range(0..data.len())].clone())
        .collect()
}

/// Uniform-with-replacement view over the current task's training split,
/// for the online-meta task pool.
struct CurrentTaskSource<'a> {
    data: &'a [Sample],
}

impl BatchSource for CurrentTaskSource<'_> {
    fn sample_batch(&self, task_id: usize, n: usize, rng_seed: u64) -> Result<Vec<Sample>> {
        if self.data.is_empty() {
            return Err(Error::UnknownTask(task_id));
        }
        Ok(draw_batch(
            self.data,
            n,
            &[rng_seed, purpose::CURRENT_BATCH, task_id as u64],
        ))
    }
}

enum ReplayState {
    Buffer(ReplayBuffer),
    Generative(GenerativeReplaySource),
}

impl ReplayState {
    fn sample(&self, task_id: usize, n: usize, seed: u64) -> Result<Vec<Sample>> {
        match self {
            ReplayState::Buffer(b) => b.sample_batch(task_id, n, seed),
            ReplayState::Generative(g) => g.sample_batch(task_id, n, seed),
        }
    }

    fn source(&self) -> &dyn BatchSource {
        match self {
            ReplayState::Buffer(b) => b,
            ReplayState::Generative(g) => g,
        }
    }
}

/// Snapshot generator registered for a finished task. Diffusion tasks freeze
/// the trained model itself; the cheap families freeze a Gaussian fit of the
/// task's training inputs.
fn register_generative(
    gen: &mut GenerativeReplaySource,
    stream_spec: &TaskStreamSpec,
    model: &ModelSpec,
    theta: &Params,
    task: &TaskDataset,
) -> Result<()> {
    match stream_spec.family {
        StreamFamily::Mixture2DDiffusion => gen.snapshot_generator(task.task_id, model, theta),
        _ => {
            let dim = task.train[0].input.dim();
            let mut mean = crate::curvature::Vector::zeros(dim);
            for s in &task.train {
                mean.axpy(1.0 / task.train.len() as f64, &s.input);
            }
            gen.snapshot_generator(task.task_id, &ModelSpec::GaussianMean { dim }, &mean)
        }
    }
}

/// Trains through the stream with one method and one run seed, evaluating
/// every seen task on its held-out split every `eval_interval` steps.
///
/// A non-finite loss or parameter vector aborts the run; the partial log
/// carries the divergence step.
pub fn run_continual(
    tasks: &[TaskDataset],
    stream_spec: &TaskStreamSpec,
    cfg: &RunConfig,
    run_seed: u64,
) -> Result<MetricsLog> {
    cfg.model.validate()?;
    cfg.continual.validate()?;
    if tasks.is_empty() {
        return Err(Error::InvalidConfig("empty task stream".into()));
    }
    let model = &cfg.model;
    let mut theta = model.init_params(run_seed);
    let mut anchors: Vec<TaskAnchor> = Vec::new();
    let mut replay_state = match cfg.replay {
        ReplayKind::Buffer { capacity_per_task } => ReplayState::Buffer(ReplayBuffer::new(
            capacity_per_task,
            derive(&[run_seed, purpose::STORE]),
        )?),
        ReplayKind::Generative => ReplayState::Generative(GenerativeReplaySource::new()),
    };
    let mut log = MetricsLog {
        meta: RunMetadata {
            method: cfg.method,
            stream: stream_spec.clone(),
            model: model.clone(),
            continual: cfg.continual.clone(),
            meta: cfg.meta.clone(),
            replay: cfg.replay,
            eval_interval: cfg.eval_interval,
            run_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        records: Vec::new(),
        boundaries: Vec::new(),
        diverged: None,
        anchors_finalized: 0,
        anchor_rho: Vec::new(),
        replay_registered: 0,
    };

    let mut global_step = 0usize;
    'stream: for (t, task) in tasks.iter().enumerate() {
        if t > 0 {
            log.boundaries.push(global_step);
        }
        for _ in 0..cfg.continual.steps_per_task {
            let step_seed = derive(&[run_seed, purpose::CURRENT_GRAD, global_step as u64]);
            let next = match cfg.method {
                Method::Ftml => {
                    let meta_cfg = cfg
                        .meta
                        .as_ref()
                        .expect("validated: Ftml carries meta config");
                    let current = CurrentTaskSource { data: &task.train };
                    let mut pool: Vec<(usize, &dyn BatchSource)> = Vec::with_capacity(t + 1);
                    for past in tasks.iter().take(t) {
                        pool.push((past.task_id, replay_state.source()));
                    }
                    pool.push((task.task_id, &current));
                    ftml_step(
                        model,
                        &theta,
                        &pool,
                        cfg.continual.batch_size,
                        meta_cfg,
                        step_seed,
                    )
                    .map(|s| s.params)
                }
                _ => {
                    let current_batch = draw_batch(
                        &task.train,
                        cfg.continual.batch_size,
                        &[run_seed, purpose::CURRENT_BATCH, global_step as u64],
                    );
                    let replay_batches = if cfg.method.uses_replay() && cfg.continual.beta != 0.0 {
                        let mut batches = Vec::with_capacity(t);
                        for past in tasks.iter().take(t) {
                            let seed =
                                derive(&[run_seed, purpose::REPLAY_DRAW, global_step as u64]);
                            let drawn = replay_state.sample(
                                past.task_id,
                                cfg.continual.batch_size,
                                seed,
                            )?;
                            let labeled =
                                super::stream::attach_targets(stream_spec, past.task_id, drawn);
                            batches.push((past.task_id, labeled));
                        }
                        batches
                    } else {
                        Vec::new()
                    };
                    let active_anchors: &[TaskAnchor] = if cfg.method.uses_anchors() {
                        &anchors
                    } else {
                        &[]
                    };
                    trust_region_step(
                        model,
                        &theta,
                        &current_batch,
                        &replay_batches,
                        active_anchors,
                        &cfg.continual,
                        step_seed,
                    )
                }
            };
            theta = match next {
                Ok(p) => p,
                Err(Error::NumericalDivergence { .. }) => {
                    log.diverged = Some(global_step);
                    break 'stream;
                }
                Err(e) => return Err(e),
            };
            global_step += 1;

            if global_step.is_multiple_of(cfg.eval_interval) {
                let mut record = EvalRecord {
                    step: global_step,
                    task_in_training: task.task_id,
                    per_task_eval: Default::default(),
                    feasible: None,
                };
                for seen in tasks.iter().take(t + 1) {
                    let seed = derive(&[run_seed, purpose::EVAL, seen.task_id as u64]);
                    let loss = model.loss(&theta, &seen.eval, seed)?;
                    if !loss.is_finite() {
                        log.diverged = Some(global_step);
                        log.records.push(record);
                        break 'stream;
                    }
                    record.per_task_eval.insert(seen.task_id, loss);
                }
                if let Some(radius) = cfg.continual.trust_radius {
                    if cfg.method.uses_anchors() && !anchors.is_empty() {
                        record.feasible = Some(trust_region_feasible(&theta, &anchors, radius)?);
                    }
                }
                log.records.push(record);
            }
        }

        if cfg.method.uses_anchors() {
            let anchor = finalize_task(model, &theta, task, cfg.continual.fisher_mode, run_seed)?;
            log.anchor_rho.push(match anchor.fisher() {
                Curvature::RankOne { rho, .. } => Some(*rho),
                _ => None,
            });
            anchors.push(anchor);
            log.anchors_finalized += 1;
        }
        if cfg.method.uses_replay() {
            match &mut replay_state {
                ReplayState::Buffer(buf) => buf.store(task.task_id, &task.train),
                ReplayState::Generative(gen) => {
                    register_generative(gen, stream_spec, model, &theta, task)?
                }
            }
            log.replay_registered += 1;
        }
    }
    Ok(log)
}
