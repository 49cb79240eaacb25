use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use tvdar::stability::lyapunov_quadrature;
use tvdar::{
    fit_dar, fit_tvdar, Bandwidth, FitOptions, KernelSpec, LocalFitOptions, NoiseDistribution,
    TimePoint,
};
use tvdar_bench::sample_path;

fn global_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_dar");
    for len in [50, 500, 5000] {
        let x = sample_path(len);
        group.bench_with_input(BenchmarkId::from_parameter(len), &x, |b, x| {
            b.iter(|| fit_dar(black_box(x), &FitOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn local_fit(c: &mut Criterion) {
    let x = sample_path(1000);
    let grid = TimePoint::uniform_grid(21);
    let mut group = c.benchmark_group("fit_tvdar");
    group.sample_size(10);
    for (name, kernel, b) in [
        (
            "rectangular",
            KernelSpec::RECTANGULAR,
            Bandwidth::from_window(50, 1000).unwrap(),
        ),
        (
            "epanechnikov",
            KernelSpec::EPANECHNIKOV,
            Bandwidth::new(0.2).unwrap(),
        ),
    ] {
        group.bench_function(name, |bench| {
            bench.iter(|| {
                fit_tvdar(black_box(&x), &grid, kernel, b, &LocalFitOptions::default()).unwrap()
            })
        });
    }
    group.finish();
}

fn quadrature(c: &mut Criterion) {
    let mut group = c.benchmark_group("lyapunov_quadrature");
    for dist in [
        NoiseDistribution::GaussianStandard,
        NoiseDistribution::UniformPm1,
    ] {
        group.bench_function(format!("{dist:?}"), |b| {
            b.iter(|| lyapunov_quadrature(black_box(0.7), black_box(0.5), dist).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, global_fit, local_fit, quadrature);
criterion_main!(benches);
