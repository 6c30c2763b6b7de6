use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use trcl_core::continual::{trust_region_step, ContinualConfig, TaskAnchor};
use trcl_core::curvature::{Curvature, Matrix, Vector};
use trcl_core::fisher::{empirical_fisher, FisherMode};
use trcl_core::models::{Activation, ModelSpec, Sample};
use trcl_core::rng::stream;

use rand::Rng;
use rand_distr::StandardNormal;

fn random_vector(dim: usize, seed: u64) -> Vector {
    let mut rng = stream(&[seed]);
    Vector::from_fn(dim, |_| rng.sample::<f64, _>(StandardNormal))
}

fn curvature_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("curvature_apply");
    for dim in [64usize, 256] {
        let d = random_vector(dim, 1);
        let mut rng = stream(&[2]);
        let g = Matrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let full = Curvature::full(g.transpose().matmul(&g).unwrap()).unwrap();
        let rank_one = Curvature::rank_one(1.3, random_vector(dim, 3)).unwrap();
        group.bench_with_input(BenchmarkId::new("full", dim), &dim, |b, _| {
            b.iter(|| full.apply(&d).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("rank_one", dim), &dim, |b, _| {
            b.iter(|| rank_one.apply(&d).unwrap())
        });
    }
    group.finish();
}

fn fisher_estimation(c: &mut Criterion) {
    let spec = ModelSpec::Mlp {
        layer_sizes: vec![4, 16, 2],
        activation: Activation::Tanh,
    };
    let params = spec.init_params(1);
    let mut rng = stream(&[4]);
    let data: Vec<Sample> = (0..128)
        .map(|_| {
            Sample::labeled(
                Vector::from_fn(4, |_| rng.sample::<f64, _>(StandardNormal)),
                Vector::from_fn(2, |_| rng.sample::<f64, _>(StandardNormal)),
            )
        })
        .collect();
    let mut group = c.benchmark_group("empirical_fisher");
    for (label, mode) in [
        ("rank_one", FisherMode::RankOne),
        ("diagonal", FisherMode::Diagonal),
    ] {
        group.bench_function(label, |b| {
            b.iter(|| empirical_fisher(&spec, &params, &data, mode, 7).unwrap())
        });
    }
    group.finish();
}

fn trainer_step(c: &mut Criterion) {
    let spec = ModelSpec::Mlp {
        layer_sizes: vec![4, 16, 2],
        activation: Activation::Tanh,
    };
    let theta = spec.init_params(1);
    let mk_batch = |seed: u64| -> Vec<Sample> {
        let mut rng = stream(&[5, seed]);
        (0..64)
            .map(|_| {
                Sample::labeled(
                    Vector::from_fn(4, |_| rng.sample::<f64, _>(StandardNormal)),
                    Vector::from_fn(2, |_| rng.sample::<f64, _>(StandardNormal)),
                )
            })
            .collect()
    };
    let current = mk_batch(0);
    let replay = vec![(0usize, mk_batch(1)), (1, mk_batch(2))];
    let anchors: Vec<TaskAnchor> = (0..2)
        .map(|i| {
            TaskAnchor::new(
                i,
                theta.scale(0.9),
                Curvature::rank_one(1.0, random_vector(theta.dim(), 6 + i as u64)).unwrap(),
            )
            .unwrap()
        })
        .collect();
    let cfg = ContinualConfig::default();
    c.bench_function("trust_region_step/2_anchors_2_replays", |b| {
        b.iter(|| trust_region_step(&spec, &theta, &current, &replay, &anchors, &cfg, 9).unwrap())
    });
}

fn sampling(c: &mut Criterion) {
    let spec = ModelSpec::toy_diffusion(2, 16).unwrap();
    let params = spec.init_params(1);
    c.bench_function("diffusion_sample/32_steps_16_samples", |b| {
        b.iter(|| spec.diffusion_sample(&params, 16, 3).unwrap())
    });
}

criterion_group!(
    benches,
    curvature_apply,
    fisher_estimation,
    trainer_step,
    sampling
);
criterion_main!(benches);
