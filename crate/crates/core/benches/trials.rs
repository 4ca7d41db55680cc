use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use boxrelax::boxsolve::{solve_box_ls, SolveOptions};
use boxrelax::model::{make_shape, sample_instance, SignalPrior, TrialSeed};
use boxrelax::montecarlo::{run_trials, Execution, ExperimentConfig, SimPath};

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_trials");
    group.sample_size(10);
    for (label, path) in [("po", SimPath::Po), ("ao", SimPath::Ao)] {
        let shape = make_shape(256, 1.0, 4.0).unwrap();
        for execution in [Execution::Sequential, Execution::Parallel] {
            let cfg = ExperimentConfig::new(shape, 16, 7)
                .with_path(path)
                .with_execution(execution);
            group.bench_with_input(
                BenchmarkId::new(label, format!("{execution:?}")),
                &cfg,
                |b, cfg| b.iter(|| run_trials(cfg).unwrap()),
            );
        }
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_box_ls");
    for n in [64, 256, 512] {
        let shape = make_shape(n, 1.0, 6.0).unwrap();
        let inst = sample_instance(&shape, &TrialSeed::new(1, 0), SignalPrior::Uniform);
        group.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| solve_box_ls(&inst.a, &inst.y, &SolveOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trials, solver);
criterion_main!(benches);
