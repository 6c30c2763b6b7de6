//! The trust-region continual update and its ingredients.
//!
//! One step moves the parameters against the sum of three terms: the
//! current-task gradient, a replay gradient summed over past-task batches,
//! and the Fisher-weighted pull toward stored task anchors. The fused step
//! always equals the sum of the separately exposed terms; the meta module
//! relies on that term-level access.

use serde::{Deserialize, Serialize};

use crate::curvature::{Curvature, Vector};
use crate::error::{Error, Result};
use crate::fisher::{empirical_fisher, FisherMode};
use crate::models::{ModelSpec, Params, Sample, TaskDataset};
use crate::rng::{derive, purpose};

/// Frozen (θ*, F) pair recorded when a task finishes.
#[derive(Debug, Clone)]
pub struct TaskAnchor {
    task_id: usize,
    theta_star: Params,
    fisher: Curvature,
    degenerate: bool,
}

impl TaskAnchor {
    pub fn new(task_id: usize, theta_star: Params, fisher: Curvature) -> Result<Self> {
        if fisher.dim() != theta_star.dim() {
            return Err(Error::DimensionMismatch {
                expected: theta_star.dim(),
                got: fisher.dim(),
            });
        }
        Ok(TaskAnchor {
            task_id,
            theta_star,
            fisher,
            degenerate: false,
        })
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn theta_star(&self) -> &Params {
        &self.theta_star
    }

    pub fn fisher(&self) -> &Curvature {
        &self.fisher
    }

    /// True when the Fisher estimate collapsed (zero mean gradient); such an
    /// anchor contributes nothing to the penalty or its gradient.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualConfig {
    /// Anchor penalty weight λ.
    pub lambda: f64,
    /// Replay weight β.
    pub beta: f64,
    /// Step size η.
    pub eta: f64,
    pub fisher_mode: FisherMode,
    /// Diagnostic trust-region radius δ; feasibility is logged, not
    /// enforced.
    pub trust_radius: Option<f64>,
    pub steps_per_task: usize,
    pub batch_size: usize,
}

impl ContinualConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "eta must be > 0, got {}",
                self.eta
            )));
        }
        if let Some(r) = self.trust_radius {
            if r.is_nan() || r <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "trust_radius must be > 0, got {r}"
                )));
            }
        }
        if self.steps_per_task == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "steps_per_task and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ContinualConfig {
    fn default() -> Self {
        ContinualConfig {
            lambda: 0.1,
            beta: 1.0,
            eta: 1e-2,
            fisher_mode: FisherMode::RankOne,
            trust_radius: None,
            steps_per_task: 500,
            batch_size: 64,
        }
    }
}

/// (λ/2)·Σ_i (θ-θ*_i)ᵀ F_i (θ-θ*_i); zero with no anchors.
pub fn ewc_penalty(theta: &Params, anchors: &[TaskAnchor], lambda: f64) -> Result<f64> {
    let mut acc = 0.0;
    for a in anchors {
        acc += a.fisher.quadratic_form(&theta.sub(&a.theta_star))?;
    }
    Ok(0.5 * lambda * acc)
}

/// λ·Σ_i F_i (θ-θ*_i): the exact gradient of [`ewc_penalty`].
pub fn ewc_grad_term(theta: &Params, anchors: &[TaskAnchor], lambda: f64) -> Result<Vector> {
    let mut g = Vector::zeros(theta.dim());
    for a in anchors {
        g.axpy(lambda, &a.fisher.apply(&theta.sub(&a.theta_star))?);
    }
    Ok(g)
}

/// β·Σ_i ∇L(θ; batch_i); zero vector for an empty list or β = 0.
pub fn replay_grad_term(
    spec: &ModelSpec,
    theta: &Params,
    replay_batches: &[(usize, Vec<Sample>)],
    beta: f64,
    rng_seed: u64,
) -> Result<Vector> {
    let mut g = Vector::zeros(theta.dim());
    if beta == 0.0 {
        return Ok(g);
    }
    for (task_id, batch) in replay_batches {
        let seed = derive(&[rng_seed, purpose::REPLAY_GRAD, *task_id as u64]);
        g.axpy(beta, &spec.grad(theta, batch, seed)?);
    }
    Ok(g)
}

/// The three gradient terms of one update, exposed separately.
#[derive(Debug, Clone)]
pub struct StepTerms {
    pub current: Vector,
    pub replay: Vector,
    pub ewc: Vector,
}

impl StepTerms {
    pub fn sum(&self) -> Vector {
        self.current.add(&self.replay).add(&self.ewc)
    }
}

pub fn trust_region_terms(
    spec: &ModelSpec,
    theta: &Params,
    current_batch: &[Sample],
    replay_batches: &[(usize, Vec<Sample>)],
    anchors: &[TaskAnchor],
    config: &ContinualConfig,
    rng_seed: u64,
) -> Result<StepTerms> {
    config.validate()?;
    let current = spec.grad(
        theta,
        current_batch,
        derive(&[rng_seed, purpose::CURRENT_GRAD]),
    )?;
    let replay = replay_grad_term(spec, theta, replay_batches, config.beta, rng_seed)?;
    let ewc = ewc_grad_term(theta, anchors, config.lambda)?;
    Ok(StepTerms {
        current,
        replay,
        ewc,
    })
}

/// One fused update θ ← θ − η·(current + replay + ewc).
///
/// Inactive terms are skipped rather than added as zero vectors, which is
/// what makes the method-reduction trajectories bit-identical.
pub fn trust_region_step(
    spec: &ModelSpec,
    theta: &Params,
    current_batch: &[Sample],
    replay_batches: &[(usize, Vec<Sample>)],
    anchors: &[TaskAnchor],
    config: &ContinualConfig,
    rng_seed: u64,
) -> Result<Params> {
    config.validate()?;
    let mut update = spec.grad(
        theta,
        current_batch,
        derive(&[rng_seed, purpose::CURRENT_GRAD]),
    )?;
    if config.beta != 0.0 && !replay_batches.is_empty() {
        let replay = replay_grad_term(spec, theta, replay_batches, config.beta, rng_seed)?;
        update = update.add(&replay);
    }
    if config.lambda != 0.0 && !anchors.is_empty() {
        let ewc = ewc_grad_term(theta, anchors, config.lambda)?;
        update = update.add(&ewc);
    }
    let next = theta.sub(&update.scale(config.eta));
    if !next.is_finite() {
        return Err(Error::NumericalDivergence { step: 0 });
    }
    Ok(next)
}

/// True iff Σ_i (θ-θ*_i)ᵀ F_i (θ-θ*_i) ≤ delta. The boundary counts as
/// feasible.
pub fn trust_region_feasible(theta: &Params, anchors: &[TaskAnchor], delta: f64) -> Result<bool> {
    debug_assert!(delta > 0.0);
    let mut acc = 0.0;
    for a in anchors {
        acc += a.fisher.quadratic_form(&theta.sub(&a.theta_star))?;
    }
    Ok(acc <= delta)
}

/// Freezes the finished task: copies θ and estimates its Fisher over the
/// training split.
pub fn finalize_task(
    spec: &ModelSpec,
    theta: &Params,
    data: &TaskDataset,
    mode: FisherMode,
    rng_seed: u64,
) -> Result<TaskAnchor> {
    if data.train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let seed = derive(&[rng_seed, purpose::FISHER, data.task_id as u64]);
    let est = empirical_fisher(spec, theta, &data.train, mode, seed)?;
    Ok(TaskAnchor {
        task_id: data.task_id,
        theta_star: theta.clone(),
        fisher: est.curvature,
        degenerate: est.degenerate,
    })
}
