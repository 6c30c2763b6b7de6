//! Executable oracle suites.
//!
//! Each suite re-derives a quantity along an independent route (finite
//! differences, Monte Carlo sampling, closed-form algebra) and checks the
//! production code against it. The CLI `verify` subcommand and the
//! acceptance tests both run these.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::continual::{trust_region_terms, ContinualConfig, TaskAnchor};
use crate::curvature::{Curvature, Vector};
use crate::error::Result;
use crate::fd;
use crate::fisher::{fisher_hessian_check, ExponentialFamily};
use crate::meta::{identified_old_task_update, MetaConfig, SupportQuery};
use crate::models::{Activation, ModelSpec, Sample};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifySuite {
    All,
    FisherIdentity,
    RankOneSquare,
    GradCheck,
    TaylorLocality,
    QuadEquivalence,
}

impl std::str::FromStr for VerifySuite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(VerifySuite::All),
            "fisher-identity" | "fisheridentity" => Ok(VerifySuite::FisherIdentity),
            "rank-one-square" | "rankonesquare" => Ok(VerifySuite::RankOneSquare),
            "grad-check" | "gradcheck" => Ok(VerifySuite::GradCheck),
            "taylor-locality" | "taylorlocality" => Ok(VerifySuite::TaylorLocality),
            "quad-equivalence" | "quadequivalence" => Ok(VerifySuite::QuadEquivalence),
            other => Err(format!(
                "unknown suite '{other}' (expected all, fisher-identity, rank-one-square, grad-check, taylor-locality, quad-equivalence)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckOutcome {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Runs the named suite (or all of them) and returns per-check diagnostics.
pub fn run_verify(suite: VerifySuite, seed: u64) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    match suite {
        VerifySuite::All => {
            rank_one_square(&mut report, seed)?;
            grad_check(&mut report, seed)?;
            fisher_identity(&mut report, seed)?;
            taylor_locality(&mut report, seed)?;
            quad_equivalence(&mut report, seed)?;
        }
        VerifySuite::RankOneSquare => rank_one_square(&mut report, seed)?,
        VerifySuite::GradCheck => grad_check(&mut report, seed)?,
        VerifySuite::FisherIdentity => fisher_identity(&mut report, seed)?,
        VerifySuite::TaylorLocality => taylor_locality(&mut report, seed)?,
        VerifySuite::QuadEquivalence => quad_equivalence(&mut report, seed)?,
    }
    Ok(report)
}

/// (ρ u uᵀ)² = ρ · (ρ u uᵀ) as operators: 100 random (ρ, u, d) triples.
fn rank_one_square(report: &mut VerifyReport, seed: u64) -> Result<()> {
    let mut rng = stream(&[seed, 0x51]);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let dim = 2 + case % 9;
        let u = Vector::from_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
        let rho = rng.random::<f64>() * 4.0;
        let c = Curvature::rank_one(rho, u)?;
        let sq = c.square();
        let d = Vector::from_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
        let lhs = sq.apply(&d)?;
        let rhs = c.apply(&d)?.scale(rho);
        let err = lhs.sub(&rhs).norm() / rhs.norm().max(1.0);
        worst = worst.max(err);
    }
    report.push(
        "rank_one_square",
        worst <= 1e-12,
        format!("max operator error {worst:.3e} (tol 1e-12)"),
    );
    Ok(())
}

fn families_for_grad_check(seed: u64) -> Result<Vec<(String, ModelSpec)>> {
    let mut rng = stream(&[seed, 0x52]);
    let u = Vector::from_fn(6, |_| rng.sample::<f64, _>(StandardNormal));
    Ok(vec![
        ("GaussianMean".into(), ModelSpec::GaussianMean { dim: 5 }),
        (
            "Mlp/tanh".into(),
            ModelSpec::Mlp {
                layer_sizes: vec![3, 8, 2],
                activation: Activation::Tanh,
            },
        ),
        (
            "Mlp/softplus".into(),
            ModelSpec::Mlp {
                layer_sizes: vec![2, 6, 1],
                activation: Activation::Softplus,
            },
        ),
        ("ToyDiffusion".into(), ModelSpec::toy_diffusion(2, 8)?),
        (
            "Quadratic".into(),
            ModelSpec::Quadratic {
                center: Vector::from_fn(6, |i| 0.3 * i as f64 - 1.0),
                curvature: Curvature::rank_one(1.7, u)?,
            },
        ),
    ])
}

fn random_batch(spec: &ModelSpec, n: usize, rng: &mut impl Rng) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let input = Vector::from_fn(spec.input_dim(), |_| rng.sample::<f64, _>(StandardNormal));
            match spec {
                ModelSpec::Mlp { layer_sizes, .. } => {
                    let out = *layer_sizes.last().unwrap();
                    let target = Vector::from_fn(out, |_| rng.sample::<f64, _>(StandardNormal));
                    Sample::labeled(input, target)
                }
                _ => Sample::unlabeled(input),
            }
        })
        .collect()
}

/// Analytic gradients vs central finite differences of the loss, 20 random
/// (params, batch) points per family, relative tolerance 1e-5.
fn grad_check(report: &mut VerifyReport, seed: u64) -> Result<()> {
    let h = fd::DEFAULT_FD_STEP;
    for (label, spec) in families_for_grad_check(seed)? {
        let mut rng = stream(&[seed, 0x53]);
        let mut worst = 0.0f64;
        for case in 0..20u64 {
            let params = Vector::from_fn(spec.param_dim(), |_| {
                0.7 * rng.sample::<f64, _>(StandardNormal)
            });
            let batch = random_batch(&spec, 4, &mut rng);
            let loss_seed = seed ^ case;
            let analytic = spec.grad(&params, &batch, loss_seed)?;
            let numeric = fd::gradient(|p| spec.loss(p, &batch, loss_seed), &params, h)?;
            worst = worst.max(fd::relative_gradient_error(&analytic, &numeric, 1e-9));
        }
        report.push(
            &format!("grad_check/{label}"),
            worst <= 1e-5,
            format!("max relative error {worst:.3e} over 20 points (tol 1e-5)"),
        );
    }
    Ok(())
}

/// Monte Carlo check that E[g gᵀ] equals the expected NLL Hessian under
/// model sampling, for both exactly-sampleable families.
fn fisher_identity(report: &mut VerifyReport, seed: u64) -> Result<()> {
    let n = 100_000;
    let gaussian = ExponentialFamily::GaussianMean { dim: 4 };
    let params = Vector::from(vec![0.3, -0.2, 0.1, 0.5]);
    let r = fisher_hessian_check(&gaussian, &params, n, seed ^ 0x61)?;
    let bound = 3.0 / (n as f64).sqrt();
    report.push(
        "fisher_identity/gaussian_mc_bound",
        r.frobenius_rel_err <= bound,
        format!(
            "rel err {:.4e} vs 3/sqrt(n) = {bound:.4e}",
            r.frobenius_rel_err
        ),
    );
    report.push(
        "fisher_identity/gaussian_d4_n1e5",
        r.frobenius_rel_err <= 0.05,
        format!(
            "rel err {:.4e} (tol 0.05, n = {})",
            r.frobenius_rel_err, r.n
        ),
    );

    let softmax = ExponentialFamily::CategoricalSoftmax { classes: 3 };
    let logits = Vector::zeros(3);
    let r = fisher_hessian_check(&softmax, &logits, n, seed ^ 0x62)?;
    report.push(
        "fisher_identity/softmax_closed_form",
        r.frobenius_rel_err <= 0.05,
        format!(
            "MC outer products vs diag(p)-pp' rel err {:.4e} (tol 0.05, n = {})",
            r.frobenius_rel_err, r.n
        ),
    );
    // the expected-Hessian side is the closed form itself
    let f = softmax.analytic_fisher(&logits)?;
    let mut closed_ok = true;
    for i in 0..3 {
        for j in 0..3 {
            let expect = if i == j { 2.0 / 9.0 } else { -1.0 / 9.0 };
            closed_ok &= (f.get(i, j) - expect).abs() < 1e-14;
        }
    }
    report.push(
        "fisher_identity/softmax_hessian_is_closed_form",
        closed_ok,
        "per-sample NLL Hessian equals diag(p)-pp' at uniform logits".into(),
    );
    Ok(())
}

/// A small MLP interpolating teacher-generated data is an exact stationary
/// point; the gradient's Taylor remainder around it must shrink at quadratic
/// order.
fn taylor_locality(report: &mut VerifyReport, seed: u64) -> Result<()> {
    let spec = ModelSpec::Mlp {
        layer_sizes: vec![1, 6, 1],
        activation: Activation::Tanh,
    };
    let theta_star = spec.init_params(seed ^ 0x71);
    let batch: Vec<Sample> = (0..8)
        .map(|i| {
            let x = Vector::new(vec![-2.0 + 4.0 * i as f64 / 7.0]).expect("finite");
            let y = spec.predict(&theta_star, &x).expect("mlp output");
            Sample::labeled(x, y)
        })
        .collect();
    let grad_norm = spec.grad(&theta_star, &batch, 0)?.norm();
    report.push(
        "taylor_locality/stationary_point",
        grad_norm <= 1e-10,
        format!("gradient norm at the interpolant {grad_norm:.3e}"),
    );

    let hess = spec.hessian(&theta_star, &batch, 0)?;
    let mut rng = stream(&[seed, 0x72]);
    let mut ratios = Vec::with_capacity(10);
    for _ in 0..10 {
        let dir = Vector::from_fn(theta_star.dim(), |_| rng.sample::<f64, _>(StandardNormal))
            .normalized()?;
        let residual = |scale: f64| -> Result<f64> {
            let delta = dir.scale(scale);
            let g = spec.grad(&theta_star.add(&delta), &batch, 0)?;
            Ok(g.sub(&hess.matvec(&delta)?).norm())
        };
        ratios.push(residual(0.1)? / residual(0.05)?);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    report.push(
        "taylor_locality/quadratic_order",
        (3.0..=5.0).contains(&mean),
        format!("mean residual ratio r(0.1)/r(0.05) = {mean:.3} over 10 directions (band [3, 5])"),
    );
    Ok(())
}

/// On rank-1 quadratic tasks with λ = α·ρ and support = query = replay, one
/// trust-region old-task step must equal the identified one-step outer
/// update to 1e-10.
fn quad_equivalence(report: &mut VerifyReport, seed: u64) -> Result<()> {
    let mut rng = stream(&[seed, 0x81]);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let dim = 2 + case % 7;
        let u = Vector::from_fn(dim, |_| rng.sample::<f64, _>(StandardNormal)).normalized()?;
        let rho = 0.1 + 1.9 * rng.random::<f64>();
        let theta_star = Vector::from_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
        let theta = theta_star.add(&Vector::from_fn(dim, |_| {
            rng.sample::<f64, _>(StandardNormal)
        }));
        let alpha = 0.05 + 0.3 * rng.random::<f64>();
        let eta = 0.25;
        let spec = ModelSpec::Quadratic {
            center: theta_star.clone(),
            curvature: Curvature::rank_one(rho, u.clone())?,
        };
        let batch = vec![
            Sample::unlabeled(Vector::zeros(dim)),
            Sample::unlabeled(Vector::zeros(dim)),
        ];
        let anchor = TaskAnchor::new(0, theta_star.clone(), Curvature::rank_one(rho, u.clone())?)?;
        let cfg = ContinualConfig {
            lambda: alpha * rho,
            beta: 1.0,
            eta,
            ..Default::default()
        };
        let terms = trust_region_terms(
            &spec,
            &theta,
            &batch,
            &[(0, batch.clone())],
            std::slice::from_ref(&anchor),
            &cfg,
            seed ^ case as u64,
        )?;
        // old-task restriction: drop the current-task term
        let tr_step = theta.sub(&terms.replay.add(&terms.ewc).scale(eta));

        let sq = SupportQuery::new(batch.clone(), batch.clone())?;
        let meta_cfg = MetaConfig {
            alpha,
            eta,
            inner_steps: 1,
            first_order: false,
        };
        let identified = identified_old_task_update(
            &spec,
            &theta,
            &theta_star,
            &sq,
            &meta_cfg,
            seed ^ case as u64,
        )?;
        let err = tr_step.sub(&identified).norm() / theta.sub(&identified).norm().max(1e-9);
        worst = worst.max(err);
    }
    report.push(
        "quad_equivalence/rank_one_exact",
        worst <= 1e-10,
        format!("max relative step difference {worst:.3e} over 100 tasks (tol 1e-10)"),
    );
    Ok(())
}
