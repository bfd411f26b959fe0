use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pdlearn::complex::{cech_filtration, cubical_filtration, signed_manhattan};
use pdlearn::mlmodel::{fit, FitOptions, Penalty, Task};
use pdlearn::pimage::vectorize;
use pdlearn::pipeline::ExperimentId;
use pdlearn::reduce::compute_persistence;
use pdlearn_bench::{cloud, experiment_data, image};

fn diagrams(c: &mut Criterion) {
    let img = image(1);
    let mut group = c.benchmark_group("cubical");
    group.sample_size(20);
    group.bench_function("signed_manhattan_300", |b| b.iter(|| signed_manhattan(black_box(&img)).unwrap()));
    let f = signed_manhattan(&img).unwrap();
    group.bench_function("persistence_300", |b| {
        b.iter(|| compute_persistence(&cubical_filtration(black_box(&f)), 1, true).unwrap())
    });
    group.finish();

    let mut group = c.benchmark_group("cech");
    for mean in [30.0, 60.0] {
        let pc = cloud(mean, 2);
        group.bench_with_input(BenchmarkId::from_parameter(pc.len()), &pc, |b, pc| {
            b.iter(|| compute_persistence(&cech_filtration(black_box(pc), 2).unwrap(), 1, true).unwrap())
        });
    }
    group.finish();
}

fn vectors(c: &mut Criterion) {
    let mut group = c.benchmark_group("vectorize");
    for id in [ExperimentId::EasyImages, ExperimentId::PppGpp] {
        let (config, _, dgs) = experiment_data(id, 4, 3);
        group.bench_function(id.name(), |b| {
            b.iter(|| {
                for dg in &dgs {
                    black_box(vectorize(dg, config.degree, &config.pi).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn models(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    let (_, ds, _) = experiment_data(ExperimentId::EasyImages, 50, 4);
    for pen in [Penalty::l2(0.01), Penalty::l1(0.1)] {
        let name = format!("logistic_{:?}", pen.kind).to_lowercase();
        group.bench_function(name, |b| {
            b.iter(|| fit(black_box(&ds), Task::Classification, &pen, &FitOptions::default()).unwrap())
        });
    }
    let (_, ds, _) = experiment_data(ExperimentId::LinregImages, 60, 5);
    for pen in [Penalty::l2(0.01), Penalty::l1(0.01)] {
        let name = format!("linear_{:?}", pen.kind).to_lowercase();
        group.bench_function(name, |b| {
            b.iter(|| fit(black_box(&ds), Task::Regression, &pen, &FitOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, diagrams, vectors, models);
criterion_main!(benches);
