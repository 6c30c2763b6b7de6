//! End-to-end behavior of the sequential trainer: determinism, method
//! reductions, directional retention on shifted Gaussians, and export
//! stability.

use trcl_core::harness::{
    compute_forgetting, export_results, make_task_stream, run_continual, ExportFormat, Method,
    MetricsLog, ReplayKind, RunConfig, StreamFamily, TaskStreamSpec,
};
use trcl_core::models::ModelSpec;

fn gaussian_stream(n_tasks: usize, het: f64, seed: u64) -> TaskStreamSpec {
    TaskStreamSpec {
        family: StreamFamily::GaussianShift,
        n_tasks,
        heterogeneity: het,
        seed,
        train_size: 600,
        eval_size: 200,
    }
}

fn config(stream: &TaskStreamSpec, method: Method, steps: usize) -> RunConfig {
    let mut cfg = RunConfig::defaults(stream, method);
    cfg.continual.steps_per_task = steps;
    cfg
}

type TraceBits = Vec<(usize, usize, Vec<(usize, u64)>)>;

fn trace_bits(log: &MetricsLog) -> TraceBits {
    log.records
        .iter()
        .map(|r| {
            (
                r.step,
                r.task_in_training,
                r.per_task_eval
                    .iter()
                    .map(|(t, l)| (*t, l.to_bits()))
                    .collect(),
            )
        })
        .collect()
}

#[test]
fn identical_inputs_give_bit_identical_logs() {
    let stream = gaussian_stream(3, 2.0, 5);
    let tasks = make_task_stream(&stream).unwrap();
    let cfg = config(&stream, Method::TrustRegion, 60);
    let a = run_continual(&tasks, &stream, &cfg, 9).unwrap();
    let b = run_continual(&tasks, &stream, &cfg, 9).unwrap();
    assert_eq!(trace_bits(&a), trace_bits(&b));
}

#[test]
fn trust_region_reduces_to_replay_ewc_and_finetune() {
    let stream = gaussian_stream(2, 4.0, 3);
    let tasks = make_task_stream(&stream).unwrap();
    let seed = 4;
    let steps = 100; // 200 logged steps over the two tasks

    let tr = |lambda: f64, beta: f64| {
        let mut cfg = config(&stream, Method::TrustRegion, steps);
        cfg.continual.lambda = lambda;
        cfg.continual.beta = beta;
        run_continual(&tasks, &stream, &cfg, seed).unwrap()
    };
    let baseline = |method: Method| {
        let mut cfg = config(&stream, method, steps);
        // keep the shared constants identical so trajectories can coincide
        cfg.continual.lambda = if method == Method::Ewc { 0.1 } else { 0.0 };
        cfg.continual.beta = if method == Method::Replay { 1.0 } else { 0.0 };
        run_continual(&tasks, &stream, &cfg, seed).unwrap()
    };

    assert_eq!(
        trace_bits(&tr(0.0, 1.0)),
        trace_bits(&baseline(Method::Replay)),
        "lambda=0 vs Replay"
    );
    assert_eq!(
        trace_bits(&tr(0.1, 0.0)),
        trace_bits(&baseline(Method::Ewc)),
        "beta=0 vs Ewc"
    );
    assert_eq!(
        trace_bits(&tr(0.0, 0.0)),
        trace_bits(&baseline(Method::Finetune)),
        "0,0 vs Finetune"
    );
}

#[test]
fn finetune_forgets_by_the_closed_form_margin() {
    // moving the mean from task 0 to task 1 raises task-0 NLL by
    // 0.5 * ||mu_0 - mu_1||^2 = 8 in expectation; half of that is a safe
    // floor under sampling noise
    let stream = gaussian_stream(2, 4.0, 11);
    let tasks = make_task_stream(&stream).unwrap();
    let cfg = config(&stream, Method::Finetune, 300);
    let log = run_continual(&tasks, &stream, &cfg, 1).unwrap();
    let f = compute_forgetting(&log).unwrap();
    assert!(
        f.per_task[&0] > 4.0,
        "forgetting {:.3} below the closed-form floor",
        f.per_task[&0]
    );
}

#[test]
fn trust_region_retains_the_first_task_better_than_finetune() {
    let mut finetune_final = 0.0;
    let mut tr_final = 0.0;
    let n_seeds = 5;
    for s in 1..=n_seeds {
        let stream = gaussian_stream(2, 4.0, 200 + s);
        let tasks = make_task_stream(&stream).unwrap();
        let log_f =
            run_continual(&tasks, &stream, &config(&stream, Method::Finetune, 300), s).unwrap();
        let log_t = run_continual(
            &tasks,
            &stream,
            &config(&stream, Method::TrustRegion, 300),
            s,
        )
        .unwrap();
        finetune_final += log_f.final_record().unwrap().per_task_eval[&0] / n_seeds as f64;
        tr_final += log_t.final_record().unwrap().per_task_eval[&0] / n_seeds as f64;
    }
    assert!(
        tr_final < finetune_final,
        "final task-0 eval: trust region {tr_final:.3} vs finetune {finetune_final:.3}"
    );
}

#[test]
fn single_task_stream_makes_the_gradient_methods_coincide() {
    // no anchors and no replay ever materialize, so every trust-region
    // family method is plain training
    let stream = TaskStreamSpec {
        family: StreamFamily::GaussianShift,
        n_tasks: 1,
        heterogeneity: 0.0,
        seed: 2,
        train_size: 200,
        eval_size: 100,
    };
    let tasks = make_task_stream(&stream).unwrap();
    let mut traces = Vec::new();
    for method in [
        Method::Finetune,
        Method::Ewc,
        Method::Replay,
        Method::TrustRegion,
    ] {
        let cfg = config(&stream, method, 80);
        traces.push(trace_bits(
            &run_continual(&tasks, &stream, &cfg, 7).unwrap(),
        ));
    }
    for t in &traces[1..] {
        assert_eq!(&traces[0], t);
    }
}

#[test]
fn boundaries_anchors_and_registrations_are_counted() {
    let stream = gaussian_stream(4, 1.0, 6);
    let tasks = make_task_stream(&stream).unwrap();
    let log = run_continual(
        &tasks,
        &stream,
        &config(&stream, Method::TrustRegion, 40),
        1,
    )
    .unwrap();
    assert_eq!(log.boundaries, vec![40, 80, 120]);
    assert_eq!(log.anchors_finalized, 4);
    assert_eq!(log.replay_registered, 4);

    let log = run_continual(&tasks, &stream, &config(&stream, Method::Finetune, 40), 1).unwrap();
    assert_eq!(log.anchors_finalized, 0);
    assert_eq!(log.replay_registered, 0);

    let log = run_continual(&tasks, &stream, &config(&stream, Method::Ftml, 40), 1).unwrap();
    assert_eq!(log.anchors_finalized, 0);
    assert_eq!(log.replay_registered, 4);
}

#[test]
fn ftml_runs_and_logs_like_the_others() {
    let stream = gaussian_stream(3, 2.0, 8);
    let tasks = make_task_stream(&stream).unwrap();
    let log = run_continual(&tasks, &stream, &config(&stream, Method::Ftml, 50), 2).unwrap();
    assert!(log.diverged.is_none());
    let last = log.final_record().unwrap();
    assert_eq!(last.per_task_eval.len(), 3);
}

#[test]
fn diffusion_stream_with_generative_replay_smoke() {
    let stream = TaskStreamSpec {
        family: StreamFamily::Mixture2DDiffusion,
        n_tasks: 2,
        heterogeneity: 2.0,
        seed: 3,
        train_size: 64,
        eval_size: 32,
    };
    let tasks = make_task_stream(&stream).unwrap();
    let mut cfg = RunConfig::defaults(&stream, Method::TrustRegion);
    cfg.model = ModelSpec::toy_diffusion(2, 8).unwrap();
    cfg.continual.steps_per_task = 30;
    cfg.continual.batch_size = 8;
    cfg.eval_interval = 10;
    assert!(matches!(cfg.replay, ReplayKind::Generative));
    let log = run_continual(&tasks, &stream, &cfg, 1).unwrap();
    assert!(log.diverged.is_none());
    assert_eq!(log.replay_registered, 2);
    assert_eq!(log.final_record().unwrap().per_task_eval.len(), 2);
}

#[test]
fn divergent_run_is_flagged_not_clamped() {
    let stream = gaussian_stream(2, 4.0, 9);
    let tasks = make_task_stream(&stream).unwrap();
    let mut cfg = config(&stream, Method::Finetune, 400);
    cfg.continual.eta = 10.0; // contraction factor 9 per step, overflows fast
    let log = run_continual(&tasks, &stream, &cfg, 1).unwrap();
    assert!(log.diverged.is_some(), "expected a flagged divergence");
}

#[test]
fn csv_export_is_byte_stable_with_the_documented_schema() {
    let dir = std::env::temp_dir().join(format!("trcl_export_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let stream = gaussian_stream(2, 1.0, 12);
    let tasks = make_task_stream(&stream).unwrap();
    let cfg = config(&stream, Method::Replay, 20);
    let log = run_continual(&tasks, &stream, &cfg, 3).unwrap();

    let p1 = dir.join("a.csv");
    let p2 = dir.join("b.csv");
    export_results(&log, &p1, ExportFormat::Csv).unwrap();
    export_results(&log, &p2, ExportFormat::Csv).unwrap();
    let a = std::fs::read(&p1).unwrap();
    let b = std::fs::read(&p2).unwrap();
    assert_eq!(a, b, "re-export must be byte-identical");

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,task_in_training,task_id,eval_loss"
    );
    // 2 records during task 0 (steps 10, 20) plus 2 during task 1 with two
    // tasks each: 2*1 + 2*2 = 6 data rows
    assert_eq!(
        text.lines().count() - 1,
        log.records
            .iter()
            .map(|r| r.per_task_eval.len())
            .sum::<usize>()
    );

    // json variant round-trips
    let pj = dir.join("a.json");
    export_results(&log, &pj, ExportFormat::Json).unwrap();
    let parsed: MetricsLog = serde_json::from_str(&std::fs::read_to_string(&pj).unwrap()).unwrap();
    assert_eq!(trace_bits(&parsed), trace_bits(&log));
    assert!(dir.join("a.meta.json").exists(), "metadata sidecar missing");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn empty_log_exports_header_only() {
    let stream = gaussian_stream(2, 1.0, 12);
    let tasks = make_task_stream(&stream).unwrap();
    let cfg = config(&stream, Method::Finetune, 20);
    let mut log = run_continual(&tasks, &stream, &cfg, 3).unwrap();
    log.records.clear();
    let path = std::env::temp_dir().join(format!("trcl_empty_{}.csv", std::process::id()));
    export_results(&log, &path, ExportFormat::Csv).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "step,task_in_training,task_id,eval_loss\n");
    std::fs::remove_file(&path).ok();
    std::fs::remove_file(path.with_extension("meta.json")).ok();
}

#[test]
fn trust_radius_feasibility_is_logged_after_the_first_boundary() {
    let stream = gaussian_stream(2, 4.0, 14);
    let tasks = make_task_stream(&stream).unwrap();
    let mut cfg = config(&stream, Method::TrustRegion, 40);
    cfg.continual.trust_radius = Some(50.0);
    let log = run_continual(&tasks, &stream, &cfg, 1).unwrap();
    for r in &log.records {
        if r.task_in_training == 0 {
            assert_eq!(r.feasible, None, "no anchors exist during the first task");
        } else {
            assert!(
                r.feasible.is_some(),
                "feasibility missing at step {}",
                r.step
            );
        }
    }
    assert_eq!(log.anchor_rho.len(), 2);
    // diagonal Fisher mode: rho is not defined
    assert!(log.anchor_rho.iter().all(|r| r.is_none()));
}

#[test]
fn rank_one_mode_records_anchor_rho() {
    let stream = TaskStreamSpec {
        family: StreamFamily::SinusoidRegression,
        n_tasks: 2,
        heterogeneity: 1.0,
        seed: 15,
        train_size: 200,
        eval_size: 50,
    };
    let tasks = make_task_stream(&stream).unwrap();
    let mut cfg = config(&stream, Method::TrustRegion, 60);
    cfg.continual.fisher_mode = trcl_core::FisherMode::RankOne;
    let log = run_continual(&tasks, &stream, &cfg, 1).unwrap();
    assert_eq!(log.anchor_rho.len(), 2);
    for rho in &log.anchor_rho {
        assert!(rho.unwrap() >= 0.0);
    }
}
