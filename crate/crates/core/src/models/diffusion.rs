//! Toy denoising diffusion pieces: the variance-preserving noise schedule,
//! the closed-form forward marginal, and ancestral reverse sampling driven by
//! a small MLP noise predictor.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curvature::Vector;
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

use super::mlp::MlpView;

/// Number of sinusoidal timestep features fed to the denoiser alongside x_t.
pub const TIME_FEATURES: usize = 4;

/// Forward-process schedule: β_t, α_t = 1-β_t and their running product ᾱ_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    steps: usize,
    betas: Vector,
    alphas: Vector,
    alpha_bars: Vector,
}

impl NoiseSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidValue(
                "schedule needs at least one step".into(),
            ));
        }
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidValue("betas must lie in (0,1)".into()));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut bar = 1.0;
        let alpha_bars: Vec<f64> = alphas
            .iter()
            .map(|a| {
                bar *= a;
                bar
            })
            .collect();
        Ok(NoiseSchedule {
            steps: betas.len(),
            betas: Vector::new(betas)?,
            alphas: Vector::new(alphas)?,
            alpha_bars: Vector::new(alpha_bars)?,
        })
    }

    /// Linear β ramp, the default for toy runs.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidValue(
                "schedule needs at least one step".into(),
            ));
        }
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        NoiseSchedule::new(betas)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// β_t for t in 1..=steps.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t, with ᾱ_0 = 1 by convention.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::InvalidValue(format!(
                "timestep {t} outside 1..={}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Closed-form forward marginal: x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·ε.
pub fn diffusion_forward(
    x0: &Vector,
    t: usize,
    eps: &Vector,
    schedule: &NoiseSchedule,
) -> Result<Vector> {
    schedule.check_t(t)?;
    if x0.dim() != eps.dim() {
        return Err(Error::DimensionMismatch {
            expected: x0.dim(),
            got: eps.dim(),
        });
    }
    let ab = schedule.alpha_bar(t);
    Ok(x0.scale(ab.sqrt()).add(&eps.scale((1.0 - ab).sqrt())))
}

/// Sinusoidal features for an integer timestep.
pub fn time_features(t: usize, steps: usize) -> [f64; TIME_FEATURES] {
    let x = t as f64 / steps as f64;
    [
        (std::f64::consts::PI * x).sin(),
        (std::f64::consts::PI * x).cos(),
        (2.0 * std::f64::consts::PI * x).sin(),
        (2.0 * std::f64::consts::PI * x).cos(),
    ]
}

/// Per-sample training draw (t, ε), keyed by (seed, sample index) so losses
/// and gradients are reproducible.
pub(crate) fn noise_draw(seed: u64, index: usize, dim: usize, steps: usize) -> (usize, Vec<f64>) {
    let mut rng = stream(&[seed, purpose::DIFF_SAMPLE, index as u64]);
    let t = rng.random_range(1..=steps);
    let eps = (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    (t, eps)
}

pub(crate) fn denoiser_input(x_t: &[f64], t: usize, steps: usize) -> Vec<f64> {
    let mut input = Vec::with_capacity(x_t.len() + TIME_FEATURES);
    input.extend_from_slice(x_t);
    input.extend_from_slice(&time_features(t, steps));
    input
}

/// Ancestral reverse chain from standard Gaussian noise. Sample i consumes
/// only the stream keyed by (seed, i), so batches are reproducible and
/// order-independent.
pub(crate) fn ancestral_sample(
    net: MlpView<'_>,
    params: &[f64],
    schedule: &NoiseSchedule,
    dim: usize,
    n: usize,
    seed: u64,
) -> Vec<Vector> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(&[seed, purpose::GEN_SAMPLE, i as u64]);
        let mut x: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        for t in (1..=schedule.steps()).rev() {
            let eps_hat = net
                .forward(params, &denoiser_input(&x, t, schedule.steps()))
                .output()
                .to_vec();
            let (beta, alpha) = (schedule.beta(t), schedule.alpha(t));
            let coef = beta / (1.0 - schedule.alpha_bar(t)).sqrt();
            for (xj, ej) in x.iter_mut().zip(&eps_hat) {
                *xj = (*xj - coef * ej) / alpha.sqrt();
            }
            if t > 1 {
                let var = beta * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - schedule.alpha_bar(t));
                let sd = var.sqrt();
                for xj in x.iter_mut() {
                    *xj += sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        out.push(Vector::new(x).unwrap_or_else(|_| Vector::zeros(dim)));
    }
    out
}
