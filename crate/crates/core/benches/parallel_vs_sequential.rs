//! Parallel-vs-sequential lane benchmarks.
//!
//! `indexed_map` fans batch work out on the rayon pool when the default
//! `parallel` feature is on; `indexed_map_seq` is the sequential
//! reference lane. Both reduce in index order, so results are
//! bit-identical; these benches measure the speed difference on the
//! crate's real workloads: rollout batches, judged plan scoring, and a
//! full stage-2 training epoch.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use anchorlab::env::{generate_corpus, generate_task, Corpus, GenParams, TaskInstance};
use anchorlab::parallel::{indexed_map, indexed_map_seq};
use anchorlab::policy::{rollout, PolicyParams, RolloutConfig};
use anchorlab::reward::{score_plan, trajectory_exec_reward, JudgeBackend, RubricSet};
use anchorlab::rng;
use anchorlab::trainer::{run_epochs, Algo, TrainOptions, TrainSetup};

fn setup() -> (Corpus, Vec<TaskInstance>, PolicyParams) {
    let corpus = generate_corpus(42, &GenParams::new(120, 8, 2)).unwrap();
    let tasks: Vec<TaskInstance> = (0..32)
        .map(|i| generate_task(&corpus, 2, 1000 + i as u64).unwrap())
        .collect();
    (corpus, tasks, PolicyParams::guided(7))
}

fn rollout_batch(c: &mut Criterion) {
    let (corpus, tasks, params) = setup();
    let cfg = RolloutConfig::new(8);
    let work = |i: usize| {
        let task = &tasks[i % tasks.len()];
        let mut stream = rng::stream(5, "bench", &[i as u64]);
        let r = rollout(&params, &corpus, &task.query, &cfg, &mut stream).unwrap();
        trajectory_exec_reward(&r.trajectory)
    };
    let n = 256;
    let mut group = c.benchmark_group("rollout_batch_256");
    group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
        b.iter(|| indexed_map(n, work).iter().sum::<f64>())
    });
    group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
        b.iter(|| indexed_map_seq(n, work).iter().sum::<f64>())
    });
    group.finish();
}

fn plan_scoring_batch(c: &mut Criterion) {
    let (corpus, tasks, params) = setup();
    let rubrics = RubricSet::seeded();
    let judge = JudgeBackend::feature();
    let cfg = RolloutConfig::new(4).plan_only();
    let plans: Vec<(String, String)> = (0..256)
        .map(|i| {
            let task = &tasks[i % tasks.len()];
            let mut stream = rng::stream(9, "bench-plan", &[i as u64]);
            let r = rollout(&params, &corpus, &task.query, &cfg, &mut stream).unwrap();
            (task.query.text.clone(), r.trajectory.anchor_plan)
        })
        .collect();
    let work = |i: usize| {
        let (query, plan) = &plans[i];
        score_plan(&rubrics, query, plan, &judge).unwrap().total
    };
    let mut group = c.benchmark_group("plan_scoring_256");
    group.bench_function("parallel", |b| {
        b.iter(|| indexed_map(plans.len(), work).iter().sum::<f64>())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| indexed_map_seq(plans.len(), work).iter().sum::<f64>())
    });
    group.finish();
}

fn stage2_epoch(c: &mut Criterion) {
    let (corpus, tasks, params) = setup();
    let rubrics = RubricSet::seeded();
    let judge = JudgeBackend::feature();
    let opts = TrainOptions {
        seed: 5,
        group_size: 4,
        stage1_epochs: 0,
        stage2_epochs: 1,
        max_steps: 6,
        batch_size: 0,
        ..Default::default()
    };
    c.bench_function("stage2_epoch_32x4", |b| {
        b.iter(|| {
            let setup = TrainSetup {
                corpus: &corpus,
                tasks: &tasks,
                rubrics: &rubrics,
                judge: &judge,
            };
            let mut p = params.clone();
            run_epochs(&mut p, Algo::Grpo, &setup, &opts, 0, |_, _| {}).unwrap();
            p.weights[0]
        })
    });
}

fn corpus_search(c: &mut Criterion) {
    let (corpus, tasks, _) = setup();
    c.bench_function("search_term_overlap", |b| {
        b.iter(|| {
            let mut hits = 0usize;
            for task in &tasks {
                hits += corpus.search(&task.query.text, 5).unwrap().len();
            }
            hits
        })
    });
}

criterion_group!(benches, rollout_batch, plan_scoring_batch, stage2_epoch, corpus_search);
criterion_main!(benches);
