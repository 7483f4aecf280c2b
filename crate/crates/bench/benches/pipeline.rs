use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use geohedonic::dataio::{FeatureContext, PropertyRecord};
use geohedonic::fit::{FitMethod, FittedModel, ModelName, ModelSpec, PostcodeMode};
use geohedonic::knn;
use geohedonic::smooth;
use geohedonic::synth::{self, GeneratorConfig};
use std::hint::black_box;

fn records(n: usize) -> Vec<PropertyRecord> {
    synth::generate_clean(&GeneratorConfig::dublin(1).with_size(n), &FeatureContext::default())
        .unwrap()
        .0
}

fn bases(c: &mut Criterion) {
    let recs = records(5000);
    let sizes: Vec<f64> = recs.iter().map(|r| r.size).collect();
    let coords: Vec<_> = recs.iter().map(|r| r.planar).collect();
    let knots = smooth::choose_quantile_knots(&sizes, 20).unwrap();
    c.bench_function("cr_basis 5000x20", |b| b.iter(|| smooth::cr_basis(black_box(&sizes), &knots).unwrap()));

    let sk = smooth::choose_spatial_knots(&coords, 100, 0);
    let rho = smooth::default_rho(&sk);
    c.bench_function("gp_term 5000x100", |b| b.iter(|| smooth::gp_term(black_box(&coords), &sk, rho).unwrap()));
}

fn fitting(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    for n in [1000, 2500] {
        let recs = records(n);
        for name in [ModelName::Linear, ModelName::Gam3] {
            let spec = ModelSpec::named(name, PostcodeMode::Given);
            g.bench_with_input(BenchmarkId::new(name.label(), n), &recs, |b, r| {
                b.iter(|| FittedModel::fit(r, &spec, &FitMethod::default()).unwrap())
            });
        }
    }
    g.finish();
}

fn nearest_neighbours(c: &mut Criterion) {
    let recs = records(2000);
    c.bench_function("knn_estimate k=9 over 2000", |b| {
        b.iter(|| knn::knn_estimate(black_box(&recs[17]), &recs, 9).unwrap())
    });
    let mut g = c.benchmark_group("knn_evaluate");
    g.sample_size(10);
    g.bench_function("leave-one-out 2000", |b| b.iter(|| knn::knn_evaluate(&recs, &knn::DEFAULT_KS).unwrap()));
    g.finish();
}

criterion_group!(benches, bases, fitting, nearest_neighbours);
criterion_main!(benches);
