//! Replay sources: stored-sample buffers and frozen generative snapshots.
//!
//! Buffers keep a per-task reservoir of real samples; generative sources
//! keep a frozen (spec, params) snapshot per task and synthesize batches on
//! demand. Snapshots are never updated after registration, which keeps
//! generator drift out of the picture.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::{ModelSpec, Params, Sample};
use crate::rng::{purpose, stream};

/// Anything a past task can be re-sampled from.
pub trait BatchSource {
    fn sample_batch(&self, task_id: usize, n: usize, rng_seed: u64) -> Result<Vec<Sample>>;
}

/// Per-task reservoirs with a fixed capacity.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity_per_task: usize,
    seed: u64,
    per_task: BTreeMap<usize, Vec<Sample>>,
}

impl ReplayBuffer {
    pub fn new(capacity_per_task: usize, seed: u64) -> Result<Self> {
        if capacity_per_task == 0 {
            return Err(Error::InvalidValue(
                "capacity_per_task must be positive".into(),
            ));
        }
        Ok(ReplayBuffer {
            capacity_per_task,
            seed,
            per_task: BTreeMap::new(),
        })
    }

    pub fn capacity_per_task(&self) -> usize {
        self.capacity_per_task
    }

    pub fn tasks(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_task.keys().copied()
    }

    pub fn stored(&self, task_id: usize) -> Option<&[Sample]> {
        self.per_task.get(&task_id).map(|v| v.as_slice())
    }

    /// Reservoir-samples the incoming slice down to capacity (algorithm R,
    /// uniform over the input) under a seed derived from the task id.
    /// Re-storing a task replaces its reservoir outright.
    pub fn store(&mut self, task_id: usize, samples: &[Sample]) {
        let cap = self.capacity_per_task;
        let mut reservoir: Vec<Sample> = samples.iter().take(cap).cloned().collect();
        if samples.len() > cap {
            let mut rng = stream(&[self.seed, purpose::STORE, task_id as u64]);
            for (i, s) in samples.iter().enumerate().skip(cap) {
                let j = rng.random_range(0..=i);
                if j < cap {
                    reservoir[j] = s.clone();
                }
            }
        }
        self.per_task.insert(task_id, reservoir);
    }
}

impl BatchSource for ReplayBuffer {
    /// Uniform draw with replacement from the stored reservoir.
    fn sample_batch(&self, task_id: usize, n: usize, rng_seed: u64) -> Result<Vec<Sample>> {
        if n == 0 {
            return Err(Error::InvalidValue("batch size must be >= 1".into()));
        }
        let stored = self
            .per_task
            .get(&task_id)
            .ok_or(Error::UnknownTask(task_id))?;
        if stored.is_empty() {
            return Err(Error::UnknownTask(task_id));
        }
        let mut rng = stream(&[rng_seed, purpose::REPLAY_DRAW, task_id as u64]);
        Ok((0..n)
            .map(|_| stored[rng.random_range(0..stored.len())].clone())
            .collect())
    }
}

/// Frozen per-task generator snapshots.
#[derive(Debug, Clone, Default)]
pub struct GenerativeReplaySource {
    per_task: BTreeMap<usize, (ModelSpec, Params)>,
}

impl GenerativeReplaySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tasks(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_task.keys().copied()
    }

    pub fn snapshot(&self, task_id: usize) -> Option<&(ModelSpec, Params)> {
        self.per_task.get(&task_id)
    }

    /// Registers a deep copy of the generator for a finished task. A task
    /// can only be registered once.
    pub fn snapshot_generator(
        &mut self,
        task_id: usize,
        spec: &ModelSpec,
        params: &Params,
    ) -> Result<()> {
        if self.per_task.contains_key(&task_id) {
            return Err(Error::DuplicateTask(task_id));
        }
        if params.dim() != spec.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.param_dim(),
                got: params.dim(),
            });
        }
        self.per_task
            .insert(task_id, (spec.clone(), params.clone()));
        Ok(())
    }
}

impl BatchSource for GenerativeReplaySource {
    /// Synthesizes inputs from the frozen snapshot: ancestral sampling for
    /// the diffusion family, mean-plus-noise for the Gaussian family.
    /// Targets are left empty; the harness attaches them where a task family
    /// defines a ground-truth rule.
    fn sample_batch(&self, task_id: usize, n: usize, rng_seed: u64) -> Result<Vec<Sample>> {
        if n == 0 {
            return Err(Error::InvalidValue("batch size must be >= 1".into()));
        }
        let (spec, params) = self
            .per_task
            .get(&task_id)
            .ok_or(Error::UnknownTask(task_id))?;
        let seed = crate::rng::derive(&[rng_seed, purpose::GEN_SAMPLE, task_id as u64]);
        match spec {
            ModelSpec::ToyDiffusion { .. } => Ok(spec
                .diffusion_sample(params, n, seed)?
                .into_iter()
                .map(Sample::unlabeled)
                .collect()),
            ModelSpec::GaussianMean { dim } => {
                use rand_distr::StandardNormal;
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let mut rng = stream(&[seed, i as u64]);
                    let x = crate::curvature::Vector::from_fn(*dim, |_| {
                        rng.sample::<f64, _>(StandardNormal)
                    });
                    out.push(Sample::unlabeled(params.add(&x)));
                }
                Ok(out)
            }
            _ => Err(Error::WrongFamily {
                expected: "ToyDiffusion or GaussianMean",
            }),
        }
    }
}
