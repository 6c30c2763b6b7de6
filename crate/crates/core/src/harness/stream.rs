//! Synthetic task streams and per-family defaults.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::continual::ContinualConfig;
use crate::curvature::Vector;
use crate::error::{Error, Result};
use crate::fisher::FisherMode;
use crate::models::{Activation, ModelSpec, Sample, TaskDataset};
use crate::rng::{purpose, stream};

use super::config::ReplayKind;
use super::{StreamFamily, TaskStreamSpec};

/// Unit directions with pairwise dot product 1/2, so task means sit at equal
/// pairwise distance `heterogeneity` once scaled.
fn equiangular_directions(n: usize, dim: usize) -> Vec<Vector> {
    if n == 1 {
        return vec![Vector::basis(dim, 0)];
    }
    let a = 0.5f64.sqrt();
    let nf = n as f64;
    let b = (-(2.0f64).sqrt() + (2.0 + 2.0 * nf).sqrt()) / (2.0 * nf);
    (0..n)
        .map(|i| {
            Vector::from_fn(dim, |j| {
                if j == i {
                    a + b
                } else if j < n {
                    b
                } else {
                    0.0
                }
            })
        })
        .collect()
}

pub(crate) fn gaussian_dim(spec: &TaskStreamSpec) -> usize {
    spec.n_tasks.max(2)
}

fn gaussian_mean(spec: &TaskStreamSpec, task: usize) -> Vector {
    let dim = gaussian_dim(spec);
    equiangular_directions(spec.n_tasks, dim)[task].scale(spec.heterogeneity)
}

/// Amplitude/phase of a sinusoid task: y = A sin(x + φ).
pub(crate) fn sinusoid_params(spec: &TaskStreamSpec, task: usize) -> (f64, f64) {
    let xi = task as f64 / (spec.n_tasks.max(2) - 1) as f64;
    (
        1.0 + spec.heterogeneity * xi,
        std::f64::consts::FRAC_PI_2 * spec.heterogeneity * xi,
    )
}

/// Two mixture component centers of a 2D diffusion task.
fn mixture_centers(spec: &TaskStreamSpec, task: usize) -> [Vector; 2] {
    let angle = 2.0 * std::f64::consts::PI * task as f64 / spec.n_tasks as f64;
    let base = Vector::from(vec![
        spec.heterogeneity * angle.cos(),
        spec.heterogeneity * angle.sin(),
    ]);
    let offset = Vector::from(vec![0.75, 0.0]);
    [base.add(&offset), base.sub(&offset)]
}

const MIXTURE_COMPONENT_STD: f64 = 0.25;

/// Deterministic task datasets. Train and eval splits come from disjoint
/// streams of the same seed.
pub fn make_task_stream(spec: &TaskStreamSpec) -> Result<Vec<TaskDataset>> {
    if spec.n_tasks == 0 {
        return Err(Error::InvalidConfig(
            "stream needs at least one task".into(),
        ));
    }
    if spec.heterogeneity.is_nan() || spec.heterogeneity < 0.0 {
        return Err(Error::InvalidConfig("heterogeneity must be >= 0".into()));
    }
    (0..spec.n_tasks)
        .map(|task| {
            let train = draw_split(spec, task, purpose::STREAM_TRAIN, spec.train_size)?;
            let eval = draw_split(spec, task, purpose::STREAM_EVAL, spec.eval_size)?;
            Ok(TaskDataset {
                task_id: task,
                train,
                eval,
            })
        })
        .collect()
}

fn draw_split(spec: &TaskStreamSpec, task: usize, split: u64, n: usize) -> Result<Vec<Sample>> {
    let mut rng = stream(&[spec.seed, split, task as u64]);
    let mut out = Vec::with_capacity(n);
    match spec.family {
        StreamFamily::GaussianShift => {
            let mean = gaussian_mean(spec, task);
            for _ in 0..n {
                let z = Vector::from_fn(mean.dim(), |_| rng.sample::<f64, _>(StandardNormal));
                out.push(Sample::unlabeled(mean.add(&z)));
            }
        }
        StreamFamily::SinusoidRegression => {
            let (amplitude, phase) = sinusoid_params(spec, task);
            for _ in 0..n {
                let x = rng.random::<f64>() * 10.0 - 5.0;
                let y = amplitude * (x + phase).sin();
                out.push(Sample::labeled(
                    Vector::new(vec![x])?,
                    Vector::new(vec![y])?,
                ));
            }
        }
        StreamFamily::Mixture2DDiffusion => {
            let centers = mixture_centers(spec, task);
            for _ in 0..n {
                let c = &centers[rng.random_range(0..2)];
                let z = Vector::from_fn(2, |_| {
                    MIXTURE_COMPONENT_STD * rng.sample::<f64, _>(StandardNormal)
                });
                out.push(Sample::unlabeled(c.add(&z)));
            }
        }
    }
    Ok(out)
}

/// Attaches the task's ground-truth targets to generated inputs where the
/// family defines them; diffusion and Gaussian tasks have none.
pub fn attach_targets(spec: &TaskStreamSpec, task: usize, samples: Vec<Sample>) -> Vec<Sample> {
    match spec.family {
        StreamFamily::SinusoidRegression => {
            let (amplitude, phase) = sinusoid_params(spec, task);
            samples
                .into_iter()
                .map(|s| {
                    let y = amplitude * (s.input[0] + phase).sin();
                    Sample::labeled(s.input, Vector::new(vec![y]).expect("finite target"))
                })
                .collect()
        }
        _ => samples,
    }
}

/// The natural model family for a stream.
pub fn default_model(spec: &TaskStreamSpec) -> ModelSpec {
    match spec.family {
        StreamFamily::GaussianShift => ModelSpec::GaussianMean {
            dim: gaussian_dim(spec),
        },
        StreamFamily::SinusoidRegression => ModelSpec::Mlp {
            layer_sizes: vec![1, 16, 1],
            activation: Activation::Tanh,
        },
        StreamFamily::Mixture2DDiffusion => ModelSpec::toy_diffusion(2, 32).expect("valid default"),
    }
}

/// Per-family optimizer defaults, picked from a coarse grid
/// (λ ∈ {0.1, 1, 10, 100}, β ∈ {0.5, 1}, η ∈ {1e-3, 1e-2}) on 5-task
/// streams; see the project README.
pub fn default_continual(spec: &TaskStreamSpec) -> ContinualConfig {
    let fisher_mode = match spec.family {
        StreamFamily::Mixture2DDiffusion => FisherMode::RankOne,
        _ => FisherMode::Diagonal,
    };
    ContinualConfig {
        lambda: 0.1,
        beta: 1.0,
        eta: 1e-2,
        fisher_mode,
        trust_radius: None,
        steps_per_task: 500,
        batch_size: 64,
    }
}

/// Buffer replay for the cheap families, generative snapshots for diffusion.
pub fn default_replay(spec: &TaskStreamSpec) -> ReplayKind {
    match spec.family {
        StreamFamily::Mixture2DDiffusion => ReplayKind::Generative,
        _ => ReplayKind::Buffer {
            capacity_per_task: 1300,
        },
    }
}
