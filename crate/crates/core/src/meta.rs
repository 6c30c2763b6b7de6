//! One-step meta updates and the equivalence diagnostics.
//!
//! `maml_outer_update_exact` differentiates through the inner step with an
//! explicit support Hessian; the first-order variant drops that correction.
//! `identified_old_task_update` is the same outer update after the two
//! locality identifications — query gradient taken at θ instead of θ', and
//! the correction written with explicit support/query Hessians against the
//! anchor displacement — which is the form a trust-region step reproduces
//! exactly on rank-1 quadratics. `equivalence_gap` measures how far both
//! identifications are from holding on an arbitrary model.

use serde::{Deserialize, Serialize};

use crate::continual::TaskAnchor;
use crate::curvature::Vector;
use crate::error::{Error, Result};
use crate::models::{ModelSpec, Params, Sample};
use crate::replay::BatchSource;
use crate::rng::{derive, purpose, stream};

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Inner (adaptation) step size α.
    pub alpha: f64,
    /// Outer step size η.
    pub eta: f64,
    /// Fixed at one; kept as a field so configs read explicitly.
    pub inner_steps: usize,
    pub first_order: bool,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            alpha: 0.05,
            eta: 1e-2,
            inner_steps: 1,
            first_order: true,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha < 0.0 || self.eta.is_nan() || self.eta <= 0.0 {
            return Err(Error::InvalidConfig(
                "meta step sizes must be positive".into(),
            ));
        }
        if self.inner_steps != 1 {
            return Err(Error::InvalidConfig("inner_steps is fixed at 1".into()));
        }
        Ok(())
    }
}

/// Support/query split of one task batch.
#[derive(Debug, Clone)]
pub struct SupportQuery {
    pub support: Vec<Sample>,
    pub query: Vec<Sample>,
}

impl SupportQuery {
    pub fn new(support: Vec<Sample>, query: Vec<Sample>) -> Result<Self> {
        if support.is_empty() || query.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(SupportQuery { support, query })
    }

    /// Shuffles and halves a batch; an odd leftover goes to the support set.
    pub fn split(batch: &[Sample], rng_seed: u64) -> Result<Self> {
        if batch.len() < 2 {
            return Err(Error::InvalidValue(
                "need at least two samples to split".into(),
            ));
        }
        let mut shuffled: Vec<Sample> = batch.to_vec();
        shuffled.shuffle(&mut stream(&[rng_seed, purpose::SPLIT]));
        let support_len = shuffled.len() - shuffled.len() / 2;
        let query = shuffled.split_off(support_len);
        SupportQuery::new(shuffled, query)
    }
}

/// θ' = θ − α ∇L(θ; support).
pub fn maml_inner_step(
    spec: &ModelSpec,
    theta: &Params,
    support: &[Sample],
    alpha: f64,
    rng_seed: u64,
) -> Result<Params> {
    let g = spec.grad(theta, support, derive(&[rng_seed, purpose::INNER]))?;
    Ok(theta.sub(&g.scale(alpha)))
}

/// Exact outer update plus its two logged terms.
#[derive(Debug, Clone)]
pub struct MamlUpdate {
    pub params: Params,
    /// Query gradient evaluated at the adapted parameters.
    pub query_grad_at_adapted: Vector,
    /// Support Hessian applied to that gradient; enters the update scaled
    /// by −α.
    pub support_curvature_correction: Vector,
}

/// θ ← θ − η (I − α H_support(θ)) ∇L(θ'; query), with the support Hessian
/// formed explicitly (dense dimension cap applies).
pub fn maml_outer_update_exact(
    spec: &ModelSpec,
    theta: &Params,
    sq: &SupportQuery,
    cfg: &MetaConfig,
    rng_seed: u64,
) -> Result<MamlUpdate> {
    cfg.validate()?;
    let h_support = spec.hessian(
        theta,
        &sq.support,
        derive(&[rng_seed, purpose::SUPPORT_HESS]),
    )?;
    let adapted = maml_inner_step(spec, theta, &sq.support, cfg.alpha, rng_seed)?;
    let query_grad = spec.grad(&adapted, &sq.query, derive(&[rng_seed, purpose::QUERY]))?;
    let correction = h_support.matvec(&query_grad)?;
    let update = query_grad.sub(&correction.scale(cfg.alpha));
    Ok(MamlUpdate {
        params: theta.sub(&update.scale(cfg.eta)),
        query_grad_at_adapted: query_grad,
        support_curvature_correction: correction,
    })
}

/// θ ← θ − η ∇L(θ'; query): the exact update without the curvature
/// correction.
pub fn maml_outer_update_first_order(
    spec: &ModelSpec,
    theta: &Params,
    sq: &SupportQuery,
    cfg: &MetaConfig,
    rng_seed: u64,
) -> Result<Params> {
    cfg.validate()?;
    let adapted = maml_inner_step(spec, theta, &sq.support, cfg.alpha, rng_seed)?;
    let query_grad = spec.grad(&adapted, &sq.query, derive(&[rng_seed, purpose::QUERY]))?;
    Ok(theta.sub(&query_grad.scale(cfg.eta)))
}

/// The outer update after the locality identifications:
/// θ ← θ − η [∇L(θ; query) + α H_support(θ) H_query(θ*) (θ − θ*)].
///
/// On a rank-1 quadratic task with λ = α ρ this equals the trust-region
/// old-task step exactly; elsewhere it is the object the trust-region update
/// approximates.
pub fn identified_old_task_update(
    spec: &ModelSpec,
    theta: &Params,
    theta_star: &Params,
    sq: &SupportQuery,
    cfg: &MetaConfig,
    rng_seed: u64,
) -> Result<Params> {
    cfg.validate()?;
    let query_grad = spec.grad(theta, &sq.query, derive(&[rng_seed, purpose::QUERY]))?;
    let correction =
        explicit_curvature_correction(spec, theta, theta_star, sq, cfg.alpha, rng_seed)?;
    Ok(theta.sub(&query_grad.add(&correction).scale(cfg.eta)))
}

/// α · H_support(θ) · H_query(θ*) · (θ − θ*) with both Hessians explicit.
fn explicit_curvature_correction(
    spec: &ModelSpec,
    theta: &Params,
    theta_star: &Params,
    sq: &SupportQuery,
    alpha: f64,
    rng_seed: u64,
) -> Result<Vector> {
    let h_support = spec.hessian(
        theta,
        &sq.support,
        derive(&[rng_seed, purpose::SUPPORT_HESS]),
    )?;
    let h_query = spec.hessian(
        theta_star,
        &sq.query,
        derive(&[rng_seed, purpose::QUERY_HESS]),
    )?;
    let delta = theta.sub(theta_star);
    Ok(h_support.matvec(&h_query.matvec(&delta)?)?.scale(alpha))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceGap {
    /// Normalized distance between the query gradient at θ' and the replay
    /// gradient at θ.
    pub gap_i_b: f64,
    /// Normalized distance between the explicit-Hessian correction and the
    /// anchor term λ F (θ − θ*).
    pub gap_ii_c: f64,
    pub delta_norm: f64,
}

/// Quantifies both identifications against a concrete anchor.
#[allow(clippy::too_many_arguments)]
pub fn equivalence_gap(
    spec: &ModelSpec,
    theta: &Params,
    anchor: &TaskAnchor,
    replay_batch: &[Sample],
    sq: &SupportQuery,
    cfg: &MetaConfig,
    lambda: f64,
    rng_seed: u64,
) -> Result<EquivalenceGap> {
    cfg.validate()?;
    let adapted = maml_inner_step(spec, theta, &sq.support, cfg.alpha, rng_seed)?;
    let seed_q = derive(&[rng_seed, purpose::QUERY]);
    let query_grad = spec.grad(&adapted, &sq.query, seed_q)?;
    let replay_grad = spec.grad(theta, replay_batch, seed_q)?;
    let gap_i_b = query_grad.sub(&replay_grad).norm() / query_grad.norm().max(1e-12);

    let delta = theta.sub(anchor.theta_star());
    let correction =
        explicit_curvature_correction(spec, theta, anchor.theta_star(), sq, cfg.alpha, rng_seed)?;
    let anchor_term = anchor.fisher().apply(&delta)?.scale(lambda);
    let gap_ii_c = correction.sub(&anchor_term).norm() / correction.norm().max(1e-12);

    Ok(EquivalenceGap {
        gap_i_b,
        gap_ii_c,
        delta_norm: delta.norm(),
    })
}

/// Outcome of one online-meta step.
#[derive(Debug, Clone)]
pub struct FtmlStep {
    pub params: Params,
    /// Which task's data drove the update.
    pub task_id: usize,
}

/// Follow-the-meta-leader step: picks one task uniformly from the given
/// handles, splits a batch from its source into support/query, and applies
/// the configured outer update. Tasks whose source cannot provide data are
/// skipped by resampling; an error is returned only when every handle fails.
pub fn ftml_step(
    spec: &ModelSpec,
    theta: &Params,
    tasks: &[(usize, &dyn BatchSource)],
    batch_size: usize,
    cfg: &MetaConfig,
    rng_seed: u64,
) -> Result<FtmlStep> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::NoSampleableTask);
    }
    if batch_size < 2 {
        return Err(Error::InvalidValue(
            "ftml needs batch_size >= 2 to split".into(),
        ));
    }
    let mut rng = stream(&[rng_seed, purpose::FTML_TASK]);
    let mut remaining: Vec<usize> = (0..tasks.len()).collect();
    while !remaining.is_empty() {
        let pick = rng.random_range(0..remaining.len());
        let idx = remaining.swap_remove(pick);
        let (task_id, source) = tasks[idx];
        let batch = match source.sample_batch(
            task_id,
            batch_size,
            derive(&[rng_seed, purpose::FTML_BATCH, task_id as u64]),
        ) {
            Ok(b) if b.len() >= 2 => b,
            _ => continue,
        };
        let sq = SupportQuery::split(&batch, derive(&[rng_seed, purpose::SPLIT, task_id as u64]))?;
        let params = if cfg.first_order {
            maml_outer_update_first_order(spec, theta, &sq, cfg, rng_seed)?
        } else {
            maml_outer_update_exact(spec, theta, &sq, cfg, rng_seed)?.params
        };
        return Ok(FtmlStep { params, task_id });
    }
    Err(Error::NoSampleableTask)
}
