//! Toy differentiable model families with exact losses, hand-written
//! gradients, and dense Hessians.
//!
//! Four families cover the experiments: an isotropic Gaussian mean model
//! (exact NLL), a small MLP regressor (squared error), a 2D denoising
//! diffusion model (noise-prediction loss), and a fixed quadratic bowl used
//! wherever closed-form algebra is wanted. Losses and gradients are pure
//! functions of (params, batch, rng_seed); repeated calls are bit-identical.

mod diffusion;
mod mlp;

pub use diffusion::{diffusion_forward, time_features, NoiseSchedule, TIME_FEATURES};
pub use mlp::Activation;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curvature::{Curvature, Matrix, Vector, DENSE_DIM_CAP};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

use mlp::MlpView;

/// Flat parameter vector shared by every module.
pub type Params = Vector;

const LN_2PI: f64 = 1.8378770664093453;

/// Central-difference step used for dense Hessians of the MLP-backed
/// families.
const HESSIAN_FD_STEP: f64 = 1e-5;

/// One data point. Density-style families leave the target empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vector,
    pub target: Option<Vector>,
}

impl Sample {
    pub fn unlabeled(input: Vector) -> Self {
        Sample {
            input,
            target: None,
        }
    }

    pub fn labeled(input: Vector, target: Vector) -> Self {
        Sample {
            input,
            target: Some(target),
        }
    }
}

/// Train/eval splits for one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task_id: usize,
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
}

/// Model family plus its architecture; the parameter dimension is derived
/// from the spec and checked against every vector handed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    /// Isotropic unit-variance Gaussian with learnable mean.
    GaussianMean { dim: usize },
    /// MLP regressor trained with squared error.
    Mlp {
        layer_sizes: Vec<usize>,
        activation: Activation,
    },
    /// Noise-prediction denoiser over `layer_sizes.last()`-dimensional data;
    /// the input layer must be data dim + TIME_FEATURES wide.
    ToyDiffusion {
        layer_sizes: Vec<usize>,
        schedule: NoiseSchedule,
        activation: Activation,
    },
    /// Fixed quadratic bowl ½ (θ-c)ᵀ Q (θ-c); batches are ignored beyond the
    /// non-empty check.
    Quadratic {
        center: Vector,
        curvature: Curvature,
    },
}

impl ModelSpec {
    /// Default toy diffusion spec over `data_dim`-dimensional data.
    pub fn toy_diffusion(data_dim: usize, hidden: usize) -> Result<Self> {
        Ok(ModelSpec::ToyDiffusion {
            layer_sizes: vec![data_dim + TIME_FEATURES, hidden, data_dim],
            schedule: NoiseSchedule::linear(32, 1e-4, 0.2)?,
            activation: Activation::Tanh,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::GaussianMean { dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidValue("GaussianMean needs dim >= 1".into()));
                }
            }
            ModelSpec::Mlp {
                layer_sizes,
                activation,
            } => {
                MlpView {
                    layers: layer_sizes,
                    activation: *activation,
                }
                .validate()?;
            }
            ModelSpec::ToyDiffusion {
                layer_sizes,
                activation,
                ..
            } => {
                let view = MlpView {
                    layers: layer_sizes,
                    activation: *activation,
                };
                view.validate()?;
                let data_dim = *layer_sizes.last().unwrap();
                if layer_sizes[0] != data_dim + TIME_FEATURES {
                    return Err(Error::InvalidValue(format!(
                        "denoiser input layer must be data dim + {TIME_FEATURES}, got {:?}",
                        layer_sizes
                    )));
                }
            }
            ModelSpec::Quadratic { center, curvature } => {
                if curvature.dim() != center.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: center.dim(),
                        got: curvature.dim(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn param_dim(&self) -> usize {
        match self {
            ModelSpec::GaussianMean { dim } => *dim,
            ModelSpec::Mlp {
                layer_sizes,
                activation,
            } => MlpView {
                layers: layer_sizes,
                activation: *activation,
            }
            .param_dim(),
            ModelSpec::ToyDiffusion {
                layer_sizes,
                activation,
                ..
            } => MlpView {
                layers: layer_sizes,
                activation: *activation,
            }
            .param_dim(),
            ModelSpec::Quadratic { center, .. } => center.dim(),
        }
    }

    /// Data dimension of samples this spec consumes.
    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::GaussianMean { dim } => *dim,
            ModelSpec::Mlp { layer_sizes, .. } => layer_sizes[0],
            ModelSpec::ToyDiffusion { layer_sizes, .. } => *layer_sizes.last().unwrap(),
            ModelSpec::Quadratic { center, .. } => center.dim(),
        }
    }

    pub fn schedule(&self) -> Option<&NoiseSchedule> {
        match self {
            ModelSpec::ToyDiffusion { schedule, .. } => Some(schedule),
            _ => None,
        }
    }

    /// Deterministic initial parameters for training runs.
    pub fn init_params(&self, seed: u64) -> Params {
        match self {
            ModelSpec::GaussianMean { dim } => Vector::zeros(*dim),
            ModelSpec::Quadratic { center, .. } => Vector::zeros(center.dim()),
            ModelSpec::Mlp { layer_sizes, .. } | ModelSpec::ToyDiffusion { layer_sizes, .. } => {
                let mut rng = stream(&[seed, purpose::INIT]);
                let mut params = Vec::new();
                for w in layer_sizes.windows(2) {
                    let scale = 1.0 / (w[0] as f64).sqrt();
                    for _ in 0..w[1] * w[0] {
                        params.push(scale * rng.sample::<f64, _>(StandardNormal));
                    }
                    params.extend(std::iter::repeat_n(0.0, w[1]));
                }
                Vector::new(params).expect("finite init")
            }
        }
    }

    fn check_batch(&self, params: &Params, batch: &[Sample]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if params.dim() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: params.dim(),
            });
        }
        if !matches!(self, ModelSpec::Quadratic { .. }) {
            for s in batch {
                if s.input.dim() != self.input_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.input_dim(),
                        got: s.input.dim(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Mean per-sample loss over the batch.
    pub fn loss(&self, params: &Params, batch: &[Sample], rng_seed: u64) -> Result<f64> {
        self.check_batch(params, batch)?;
        let n = batch.len() as f64;
        match self {
            ModelSpec::GaussianMean { dim } => {
                let mut acc = 0.0;
                for s in batch {
                    let r = s.input.sub(params);
                    acc += 0.5 * (*dim as f64) * LN_2PI + 0.5 * r.dot(&r);
                }
                Ok(acc / n)
            }
            ModelSpec::Mlp {
                layer_sizes,
                activation,
            } => {
                let view = MlpView {
                    layers: layer_sizes,
                    activation: *activation,
                };
                let mut acc = 0.0;
                for s in batch {
                    let y = self.target_of(s)?;
                    let out = view.forward(params.as_slice(), s.input.as_slice());
                    acc += squared_error(out.output(), y.as_slice());
                }
                Ok(acc / n)
            }
            ModelSpec::ToyDiffusion {
                layer_sizes,
                schedule,
                activation,
            } => {
                let view = MlpView {
                    layers: layer_sizes,
                    activation: *activation,
                };
                let data_dim = self.input_dim();
                let mut acc = 0.0;
                for (i, s) in batch.iter().enumerate() {
                    let (t, eps) = diffusion::noise_draw(rng_seed, i, data_dim, schedule.steps());
                    let x_t = diffusion_forward(&s.input, t, &Vector::new(eps.clone())?, schedule)?;
                    let input = diffusion::denoiser_input(x_t.as_slice(), t, schedule.steps());
                    let out = view.forward(params.as_slice(), &input);
                    acc += squared_error(out.output(), &eps);
                }
                Ok(acc / n)
            }
            ModelSpec::Quadratic { center, curvature } => {
                Ok(0.5 * curvature.quadratic_form(&params.sub(center))?)
            }
        }
    }

    /// Exact gradient of [`ModelSpec::loss`] via backpropagation.
    pub fn grad(&self, params: &Params, batch: &[Sample], rng_seed: u64) -> Result<Vector> {
        self.check_batch(params, batch)?;
        let n = batch.len() as f64;
        match self {
            ModelSpec::GaussianMean { .. } => {
                let mut g = Vector::zeros(params.dim());
                for s in batch {
                    g.axpy(1.0 / n, &params.sub(&s.input));
                }
                Ok(g)
            }
            ModelSpec::Quadratic { center, curvature } => curvature.apply(&params.sub(center)),
            _ => {
                let mut grad = vec![0.0; params.dim()];
                self.accumulate_mlp_grads(params, batch, rng_seed, |_| 1.0 / n, &mut grad)?;
                Vector::new(grad)
            }
        }
    }

    /// Per-sample gradients with the same (rng_seed, index) draws as the
    /// batch loss; the Fisher estimators build on these.
    pub fn per_sample_grads(
        &self,
        params: &Params,
        batch: &[Sample],
        rng_seed: u64,
    ) -> Result<Vec<Vector>> {
        self.check_batch(params, batch)?;
        match self {
            ModelSpec::GaussianMean { .. } => {
                Ok(batch.iter().map(|s| params.sub(&s.input)).collect())
            }
            ModelSpec::Quadratic { center, curvature } => {
                let g = curvature.apply(&params.sub(center))?;
                Ok(vec![g; batch.len()])
            }
            _ => {
                let mut out = Vec::with_capacity(batch.len());
                for (i, s) in batch.iter().enumerate() {
                    let mut grad = vec![0.0; params.dim()];
                    self.accumulate_sample_grad(params, s, i, rng_seed, 1.0, &mut grad)?;
                    out.push(Vector::new(grad)?);
                }
                Ok(out)
            }
        }
    }

    fn accumulate_mlp_grads(
        &self,
        params: &Params,
        batch: &[Sample],
        rng_seed: u64,
        weight: impl Fn(usize) -> f64,
        grad: &mut [f64],
    ) -> Result<()> {
        for (i, s) in batch.iter().enumerate() {
            self.accumulate_sample_grad(params, s, i, rng_seed, weight(i), grad)?;
        }
        Ok(())
    }

    fn accumulate_sample_grad(
        &self,
        params: &Params,
        sample: &Sample,
        index: usize,
        rng_seed: u64,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        match self {
            ModelSpec::Mlp {
                layer_sizes,
                activation,
            } => {
                let view = MlpView {
                    layers: layer_sizes,
                    activation: *activation,
                };
                let y = self.target_of(sample)?;
                let trace = view.forward(params.as_slice(), sample.input.as_slice());
                let out_grad: Vec<f64> = trace
                    .output()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(o, t)| 2.0 * weight * (o - t))
                    .collect();
                view.backprop(params.as_slice(), &trace, &out_grad, grad);
            }
            ModelSpec::ToyDiffusion {
                layer_sizes,
                schedule,
                activation,
            } => {
                let view = MlpView {
                    layers: layer_sizes,
                    activation: *activation,
                };
                let data_dim = self.input_dim();
                let (t, eps) = diffusion::noise_draw(rng_seed, index, data_dim, schedule.steps());
                let x_t =
                    diffusion_forward(&sample.input, t, &Vector::new(eps.clone())?, schedule)?;
                let input = diffusion::denoiser_input(x_t.as_slice(), t, schedule.steps());
                let trace = view.forward(params.as_slice(), &input);
                let out_grad: Vec<f64> = trace
                    .output()
                    .iter()
                    .zip(&eps)
                    .map(|(o, e)| 2.0 * weight * (o - e))
                    .collect();
                view.backprop(params.as_slice(), &trace, &out_grad, grad);
            }
            _ => unreachable!("closed-form families handled by callers"),
        }
        Ok(())
    }

    /// Dense Hessian of the batch loss, symmetrized. Exact for the
    /// Gaussian-mean and quadratic families; central differences of the
    /// analytic gradient otherwise. Capped at dimension 512.
    pub fn hessian(&self, params: &Params, batch: &[Sample], rng_seed: u64) -> Result<Matrix> {
        self.check_batch(params, batch)?;
        let dim = params.dim();
        if dim > DENSE_DIM_CAP {
            return Err(Error::DimensionCap {
                dim,
                cap: DENSE_DIM_CAP,
            });
        }
        match self {
            ModelSpec::GaussianMean { .. } => Ok(Matrix::identity(dim)),
            ModelSpec::Quadratic { curvature, .. } => curvature.to_matrix(),
            _ => {
                let h = HESSIAN_FD_STEP;
                let mut m = Matrix::zeros(dim, dim);
                let base = params.as_slice().to_vec();
                for j in 0..dim {
                    let mut plus = base.clone();
                    plus[j] += h;
                    let mut minus = base.clone();
                    minus[j] -= h;
                    let gp = self.grad(&Vector::new(plus)?, batch, rng_seed)?;
                    let gm = self.grad(&Vector::new(minus)?, batch, rng_seed)?;
                    for i in 0..dim {
                        m.set(i, j, (gp[i] - gm[i]) / (2.0 * h));
                    }
                }
                Ok(m.symmetrized())
            }
        }
    }

    /// Regressor output for one input; Mlp only.
    pub fn predict(&self, params: &Params, input: &Vector) -> Result<Vector> {
        match self {
            ModelSpec::Mlp {
                layer_sizes,
                activation,
            } => {
                if params.dim() != self.param_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.param_dim(),
                        got: params.dim(),
                    });
                }
                if input.dim() != layer_sizes[0] {
                    return Err(Error::DimensionMismatch {
                        expected: layer_sizes[0],
                        got: input.dim(),
                    });
                }
                let view = MlpView {
                    layers: layer_sizes,
                    activation: *activation,
                };
                Vector::new(
                    view.forward(params.as_slice(), input.as_slice())
                        .output()
                        .to_vec(),
                )
            }
            _ => Err(Error::WrongFamily { expected: "Mlp" }),
        }
    }

    /// Ancestral samples from the learned reverse chain; ToyDiffusion only.
    pub fn diffusion_sample(
        &self,
        params: &Params,
        n: usize,
        rng_seed: u64,
    ) -> Result<Vec<Vector>> {
        match self {
            ModelSpec::ToyDiffusion {
                layer_sizes,
                schedule,
                activation,
            } => {
                if params.dim() != self.param_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.param_dim(),
                        got: params.dim(),
                    });
                }
                let view = MlpView {
                    layers: layer_sizes,
                    activation: *activation,
                };
                Ok(diffusion::ancestral_sample(
                    view,
                    params.as_slice(),
                    schedule,
                    self.input_dim(),
                    n,
                    rng_seed,
                ))
            }
            _ => Err(Error::WrongFamily {
                expected: "ToyDiffusion",
            }),
        }
    }

    fn target_of<'s>(&self, sample: &'s Sample) -> Result<&'s Vector> {
        let y = sample
            .target
            .as_ref()
            .ok_or_else(|| Error::InvalidValue("sample is missing a target".into()))?;
        let expected = match self {
            ModelSpec::Mlp { layer_sizes, .. } => *layer_sizes.last().unwrap(),
            _ => y.dim(),
        };
        if y.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: y.dim(),
            });
        }
        Ok(y)
    }
}

fn squared_error(out: &[f64], target: &[f64]) -> f64 {
    out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum()
}
