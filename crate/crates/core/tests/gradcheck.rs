//! Gradient and Hessian oracles: analytic backpropagation against central
//! finite differences, and the dense Hessian against double finite
//! differences of the loss.

use trcl_core::curvature::Vector;
use trcl_core::fd;
use trcl_core::harness::{run_verify, VerifySuite};
use trcl_core::models::{Activation, ModelSpec, Sample};
use trcl_core::rng::stream;

use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn grad_check_suite_passes_for_every_family() {
    let report = run_verify(VerifySuite::GradCheck, 0).unwrap();
    assert!(report.checks.len() >= 5, "expected one check per family");
    for c in &report.checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

#[test]
fn mlp_hessian_matches_double_finite_differences_of_loss() {
    let spec = ModelSpec::Mlp {
        layer_sizes: vec![2, 5, 1],
        activation: Activation::Tanh,
    };
    let mut rng = stream(&[0xabc]);
    let params = Vector::from_fn(spec.param_dim(), |_| {
        0.6 * rng.sample::<f64, _>(StandardNormal)
    });
    let batch: Vec<Sample> = (0..6)
        .map(|_| {
            Sample::labeled(
                Vector::from_fn(2, |_| rng.sample::<f64, _>(StandardNormal)),
                Vector::from_fn(1, |_| rng.sample::<f64, _>(StandardNormal)),
            )
        })
        .collect();

    let analytic_path = spec.hessian(&params, &batch, 0).unwrap();
    let oracle = fd::hessian_of_scalar(|p| spec.loss(p, &batch, 0), &params, 1e-4).unwrap();

    let dim = params.dim();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            num += (analytic_path.get(i, j) - oracle.get(i, j)).powi(2);
            den += oracle.get(i, j).powi(2);
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-4, "hessian routes disagree: rel {rel:.3e}");
}

#[test]
fn exact_hessian_families_are_symmetric_without_correction() {
    let spec = ModelSpec::GaussianMean { dim: 4 };
    let batch = vec![Sample::unlabeled(Vector::from(vec![1.0, 0.0, -1.0, 2.0]))];
    let h = spec.hessian(&Vector::zeros(4), &batch, 0).unwrap();
    assert_eq!(h.asymmetry(), 0.0);

    let u = Vector::from(vec![0.6, 0.8]);
    let quad = ModelSpec::Quadratic {
        center: Vector::zeros(2),
        curvature: trcl_core::Curvature::rank_one(1.3, u).unwrap(),
    };
    let hq = quad
        .hessian(&Vector::from(vec![0.3, 0.1]), &batch, 0)
        .unwrap();
    assert_eq!(hq.asymmetry(), 0.0);
}

#[test]
fn mlp_gradients_deterministic_across_batch_order_fixed() {
    // same batch, same seed: gradients must agree bitwise
    let spec = ModelSpec::Mlp {
        layer_sizes: vec![3, 7, 2],
        activation: Activation::Softplus,
    };
    let mut rng = stream(&[0xdef]);
    let params = Vector::from_fn(spec.param_dim(), |_| rng.sample::<f64, _>(StandardNormal));
    let batch: Vec<Sample> = (0..5)
        .map(|_| {
            Sample::labeled(
                Vector::from_fn(3, |_| rng.sample::<f64, _>(StandardNormal)),
                Vector::from_fn(2, |_| rng.sample::<f64, _>(StandardNormal)),
            )
        })
        .collect();
    let a = spec.grad(&params, &batch, 31).unwrap();
    let b = spec.grad(&params, &batch, 31).unwrap();
    for i in 0..a.dim() {
        assert_eq!(a[i].to_bits(), b[i].to_bits());
    }
}
