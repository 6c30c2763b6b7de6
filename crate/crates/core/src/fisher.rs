//! Empirical Fisher estimation and the Fisher/expected-Hessian sanity check.
//!
//! The empirical estimators average per-sample *data* gradients; the
//! identity check instead draws from the model distribution itself, where
//! the Fisher provably equals the expected NLL Hessian. The two are kept as
//! distinct operations on purpose — conflating them hides the usual
//! empirical-vs-true Fisher gap.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curvature::{Curvature, Matrix, Vector};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, Params, Sample};
use crate::rng::stream;

/// Mean-gradient norms below this make the rank-1 direction meaningless.
const DEGENERATE_MEAN_GRAD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FisherMode {
    Full,
    Diagonal,
    #[default]
    RankOne,
}

/// Estimated curvature plus diagnostics.
#[derive(Debug, Clone)]
pub struct FisherEstimate {
    pub curvature: Curvature,
    /// Set when the rank-1 mode saw a vanishing mean gradient and fell back
    /// to the zero operator.
    pub degenerate: bool,
    /// Mean pairwise cosine between per-sample gradients; close to 1 when
    /// gradients are collinear and the rank-1 form captures them well.
    pub collinearity: f64,
}

/// Empirical Fisher over per-sample gradients g_i at `params`:
/// Full = (1/N)Σ g_i g_iᵀ, Diagonal keeps its diagonal, RankOne uses the
/// normalized mean gradient u with ρ = (1/N)Σ (g_i·u)².
pub fn empirical_fisher(
    spec: &ModelSpec,
    params: &Params,
    data: &[Sample],
    mode: FisherMode,
    rng_seed: u64,
) -> Result<FisherEstimate> {
    let grads = spec.per_sample_grads(params, data, rng_seed)?;
    let n = grads.len();
    let dim = params.dim();

    // mean pairwise cosine via the normalized-gradient sum
    let mut unit_sum = Vector::zeros(dim);
    let mut nonzero = 0usize;
    for g in &grads {
        let norm = g.norm();
        if norm > 0.0 {
            unit_sum.axpy(1.0 / norm, g);
            nonzero += 1;
        }
    }
    let collinearity = if nonzero > 1 {
        (unit_sum.dot(&unit_sum) - nonzero as f64) / (nonzero as f64 * (nonzero - 1) as f64)
    } else {
        1.0
    };

    let curvature = match mode {
        FisherMode::Full => {
            let mut m = Matrix::zeros(dim, dim);
            for g in &grads {
                let outer = Matrix::outer(g, g);
                m = m.add(&outer)?;
            }
            Curvature::full(m.scale(1.0 / n as f64))?
        }
        FisherMode::Diagonal => {
            let mut diag = vec![0.0; dim];
            for g in &grads {
                for (d, x) in diag.iter_mut().zip(g.as_slice()) {
                    *d += x * x;
                }
            }
            Curvature::diagonal(Vector::new(
                diag.into_iter().map(|d| d / n as f64).collect(),
            )?)?
        }
        FisherMode::RankOne => {
            let mut mean = Vector::zeros(dim);
            for g in &grads {
                mean.axpy(1.0 / n as f64, g);
            }
            if mean.norm() < DEGENERATE_MEAN_GRAD {
                let c = Curvature::rank_one(0.0, Vector::basis(dim, 0))?;
                return Ok(FisherEstimate {
                    curvature: c,
                    degenerate: true,
                    collinearity,
                });
            }
            let u = mean.normalized()?;
            let rho = grads.iter().map(|g| g.dot(&u).powi(2)).sum::<f64>() / n as f64;
            Curvature::rank_one(rho, u)?
        }
    };
    Ok(FisherEstimate {
        curvature,
        degenerate: false,
        collinearity,
    })
}

/// Families with exact model sampling and exact per-sample NLL Hessians,
/// for checking E[g gᵀ] = E[∇²ℓ] under x ~ p_θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExponentialFamily {
    GaussianMean {
        dim: usize,
    },
    /// Softmax over logits with at most 4 classes.
    CategoricalSoftmax {
        classes: usize,
    },
}

impl ExponentialFamily {
    pub fn param_dim(&self) -> usize {
        match self {
            ExponentialFamily::GaussianMean { dim } => *dim,
            ExponentialFamily::CategoricalSoftmax { classes } => *classes,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ExponentialFamily::GaussianMean { dim } if *dim == 0 => {
                Err(Error::InvalidValue("GaussianMean needs dim >= 1".into()))
            }
            ExponentialFamily::CategoricalSoftmax { classes } if !(2..=4).contains(classes) => Err(
                Error::InvalidValue("categorical softmax supports 2..=4 classes".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Closed-form Fisher at `params`; identity for the Gaussian,
    /// diag(p) - p pᵀ for the softmax.
    pub fn analytic_fisher(&self, params: &Params) -> Result<Matrix> {
        self.validate()?;
        match self {
            ExponentialFamily::GaussianMean { dim } => Ok(Matrix::identity(*dim)),
            ExponentialFamily::CategoricalSoftmax { .. } => {
                let p = softmax(params);
                let mut m = Matrix::outer(&p, &p).scale(-1.0);
                for i in 0..p.dim() {
                    m.set(i, i, m.get(i, i) + p[i]);
                }
                Ok(m)
            }
        }
    }
}

fn softmax(logits: &Params) -> Vector {
    let max = logits
        .as_slice()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.as_slice().iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Vector::new(exps.into_iter().map(|e| e / sum).collect()).expect("finite softmax")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FisherHessianReport {
    pub frobenius_rel_err: f64,
    pub n: usize,
}

/// Draws n samples x ~ p_θ and reports
/// ‖(1/n)Σ g gᵀ − (1/n)Σ ∇²ℓ‖_F / ‖(1/n)Σ g gᵀ‖_F.
pub fn fisher_hessian_check(
    family: &ExponentialFamily,
    params: &Params,
    n_model_samples: usize,
    rng_seed: u64,
) -> Result<FisherHessianReport> {
    family.validate()?;
    if n_model_samples == 0 {
        return Err(Error::InvalidValue("need at least one model sample".into()));
    }
    if params.dim() != family.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: family.param_dim(),
            got: params.dim(),
        });
    }
    let dim = params.dim();
    let mut rng = stream(&[rng_seed]);
    let mut outer_sum = Matrix::zeros(dim, dim);
    let mut hess_sum = Matrix::zeros(dim, dim);
    match family {
        ExponentialFamily::GaussianMean { .. } => {
            // g = θ - x = -z for x = θ + z; per-sample Hessian is I exactly
            for _ in 0..n_model_samples {
                let g = Vector::from_fn(dim, |_| -rng.sample::<f64, _>(StandardNormal));
                outer_sum = outer_sum.add(&Matrix::outer(&g, &g))?;
            }
            hess_sum = Matrix::identity(dim).scale(n_model_samples as f64);
        }
        ExponentialFamily::CategoricalSoftmax { .. } => {
            let p = softmax(params);
            let mut hess = Matrix::outer(&p, &p).scale(-1.0);
            for i in 0..dim {
                hess.set(i, i, hess.get(i, i) + p[i]);
            }
            for _ in 0..n_model_samples {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = dim - 1;
                for (i, &pi) in p.as_slice().iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let g = Vector::from_fn(dim, |i| p[i] - if i == k { 1.0 } else { 0.0 });
                outer_sum = outer_sum.add(&Matrix::outer(&g, &g))?;
                hess_sum = hess_sum.add(&hess)?;
            }
        }
    }
    let scale = 1.0 / n_model_samples as f64;
    let fisher_mc = outer_sum.scale(scale);
    let hess_mc = hess_sum.scale(scale);
    let diff = fisher_mc.add(&hess_mc.scale(-1.0))?;
    Ok(FisherHessianReport {
        frobenius_rel_err: diff.frobenius_norm() / fisher_mc.frobenius_norm(),
        n: n_model_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Sample;

    fn gaussian_batch(points: &[Vec<f64>]) -> Vec<Sample> {
        points
            .iter()
            .map(|p| Sample::unlabeled(Vector::from(p.clone())))
            .collect()
    }

    #[test]
    fn collinear_gradients_give_unit_rank_one() {
        // params 0, samples at (-1, 0): every per-sample gradient is (1, 0)
        let spec = ModelSpec::GaussianMean { dim: 2 };
        let data = gaussian_batch(&[vec![-1.0, 0.0], vec![-1.0, 0.0]]);
        let est =
            empirical_fisher(&spec, &Vector::zeros(2), &data, FisherMode::RankOne, 0).unwrap();
        assert!(!est.degenerate);
        assert!((est.collinearity - 1.0).abs() < 1e-12);
        match est.curvature {
            Curvature::RankOne { rho, u } => {
                assert!((rho - 1.0).abs() < 1e-12);
                assert!((u[0] - 1.0).abs() < 1e-12);
                assert!(u[1].abs() < 1e-12);
            }
            _ => panic!("expected rank one"),
        }
    }

    #[test]
    fn cancelling_gradients_are_degenerate() {
        // samples at (-1,0) and (1,0) give g = (1,0) and (-1,0)
        let spec = ModelSpec::GaussianMean { dim: 2 };
        let data = gaussian_batch(&[vec![-1.0, 0.0], vec![1.0, 0.0]]);
        let est =
            empirical_fisher(&spec, &Vector::zeros(2), &data, FisherMode::RankOne, 0).unwrap();
        assert!(est.degenerate);
        match est.curvature {
            Curvature::RankOne { rho, u } => {
                assert_eq!(rho, 0.0);
                assert_eq!(u.as_slice(), &[1.0, 0.0]);
            }
            _ => panic!("expected rank one"),
        }
    }

    #[test]
    fn diagonal_mode_matches_full_diagonal() {
        let spec = ModelSpec::GaussianMean { dim: 3 };
        let data = gaussian_batch(&[
            vec![0.5, -1.0, 2.0],
            vec![1.5, 0.0, -0.5],
            vec![-2.0, 1.0, 0.0],
        ]);
        let params = Vector::from(vec![0.1, 0.2, -0.3]);
        let full = empirical_fisher(&spec, &params, &data, FisherMode::Full, 3).unwrap();
        let diag = empirical_fisher(&spec, &params, &data, FisherMode::Diagonal, 3).unwrap();
        let fm = full.curvature.to_matrix().unwrap();
        let dm = diag.curvature.to_matrix().unwrap();
        for i in 0..3 {
            assert!((fm.get(i, i) - dm.get(i, i)).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_uniform_fisher_closed_form() {
        // logits (0,0,0): diag(1/3) - (1/3)(1/3)ᵀ
        let fam = ExponentialFamily::CategoricalSoftmax { classes: 3 };
        let f = fam.analytic_fisher(&Vector::zeros(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 / 9.0 } else { -1.0 / 9.0 };
                assert!((f.get(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_classes_out_of_range_rejected() {
        let fam = ExponentialFamily::CategoricalSoftmax { classes: 5 };
        assert!(fisher_hessian_check(&fam, &Vector::zeros(5), 10, 0).is_err());
    }
}
