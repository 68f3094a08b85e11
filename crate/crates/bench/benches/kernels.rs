use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ghplom::dmaps::{
    kernel_matrix, normalize_markov, parsimonious_residuals, KernelDenominator, DEFAULT_REGRESSION_RCOND,
    DEFAULT_REGRESSION_RIDGE,
};
use ghplom::gh::latent_epsilon;
use ghplom::isde::simulate_full;
use ghplom::pipeline::{self, FitConfig};
use ghplom::{DmapsConfig, DmapsModel, GhInterpolant, IsdeConfig, KdeModel, Selection};
use ghplom_bench::{d7, gaussian_cloud};
use std::hint::black_box;

fn dmaps(c: &mut Criterion) {
    let mut group = c.benchmark_group("dmaps");
    group.sample_size(10);
    for n in [250, 500, 1000] {
        let points = gaussian_cloud(9, n);
        group.bench_with_input(BenchmarkId::new("kernel_markov", n), &points, |b, p| {
            b.iter(|| {
                let k = kernel_matrix(p.view(), 1.0, KernelDenominator::FourEps).unwrap();
                black_box(normalize_markov(k.view(), 1.0).unwrap())
            })
        });
        group.bench_with_input(BenchmarkId::new("fit", n), &points, |b, p| {
            b.iter(|| black_box(DmapsModel::fit(p.view(), &DmapsConfig::default()).unwrap()))
        });
        let columns = gaussian_cloud(n, 9);
        group.bench_with_input(BenchmarkId::new("residuals", n), &columns, |b, cols| {
            b.iter(|| {
                black_box(
                    parsimonious_residuals(cols.view(), 1.0 / 3.0, DEFAULT_REGRESSION_RIDGE, DEFAULT_REGRESSION_RCOND)
                        .unwrap(),
                )
            })
        });
    }
    group.finish();
}

fn density(c: &mut Criterion) {
    let mut group = c.benchmark_group("density");
    for n in [500, 2000] {
        let kde = KdeModel::new(gaussian_cloud(2, n)).unwrap();
        let queries = gaussian_cloud(2, n);
        group.bench_with_input(BenchmarkId::new("force_matrix", n), &queries, |b, q| {
            b.iter(|| black_box(kde.force_matrix(q.view())))
        });
    }
    group.finish();
}

fn sampler(c: &mut Criterion) {
    let mut group = c.benchmark_group("isde");
    group.sample_size(10);
    let kde = KdeModel::new(gaussian_cloud(2, 500)).unwrap();
    let config = IsdeConfig {
        burn_in: 50,
        stride: 10,
        n_mc: 2,
        ..IsdeConfig::default()
    };
    group.bench_function("simulate_full_500", |b| {
        b.iter(|| black_box(simulate_full(&kde, &config).unwrap()))
    });
    group.finish();
}

fn harmonics(c: &mut Criterion) {
    let mut group = c.benchmark_group("gh");
    group.sample_size(10);
    let inputs = gaussian_cloud(500, 2);
    let outputs = inputs.mapv(f64::sin);
    let eps2 = latent_epsilon(inputs.view(), 1.0).unwrap();
    group.bench_function("fit_500", |b| {
        b.iter(|| {
            black_box(GhInterpolant::fit(inputs.view(), outputs.view(), eps2, 1e-6, KernelDenominator::TwoEps).unwrap())
        })
    });
    let gh = GhInterpolant::fit(inputs.view(), outputs.view(), eps2, 1e-6, KernelDenominator::TwoEps).unwrap();
    let queries = gaussian_cloud(2000, 2);
    group.bench_function("evaluate_2000", |b| {
        b.iter(|| black_box(gh.evaluate_batch(queries.view()).unwrap()))
    });
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    let data = d7(500);
    let mut config = FitConfig::default();
    config.dmaps.selection = Selection::TopM(2);
    group.bench_function("fit_d7_500", |b| {
        b.iter(|| black_box(pipeline::fit(&data, &config).unwrap()))
    });
    let model = pipeline::fit(&data, &config).unwrap();
    group.bench_function("generate_d7_500", |b| {
        b.iter(|| black_box(pipeline::generate(&model, 1, 0).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, dmaps, density, sampler, harmonics, end_to_end);
criterion_main!(benches);
