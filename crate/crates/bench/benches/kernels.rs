use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use dpicl_core::accountant::amplify;
use dpicl_core::gdp::sample_laplace;
use dpicl_core::ldp::{observed_frequencies, reconstruct_joint, sample_reconstructed, BudgetAllocation};
use dpicl_core::rng;
use dpicl_core::{perturb_dataset, Dataset, FeatureSpec, Provenance, Record, Schema, Value};
use rand::Rng;

fn binary_schema(features: usize) -> Arc<Schema> {
    let bit = || vec!["0".to_string(), "1".to_string()];
    let fs = (0..features)
        .map(|i| FeatureSpec::categorical(format!("f{i}"), bit()).unwrap())
        .collect();
    Arc::new(Schema::new("bench", fs, FeatureSpec::categorical("y", bit()).unwrap(), "ldp").unwrap())
}

fn binary_data(features: usize, rows: usize, seed: u64) -> Dataset {
    let schema = binary_schema(features);
    let mut r = rng::seeded(seed);
    let records = (0..rows)
        .map(|_| {
            let values = (0..features).map(|_| Value::Category(r.random_range(0..2))).collect();
            Record::new(values, r.random_bool(0.3))
        })
        .collect();
    Dataset::new(schema, records, Provenance::Raw).unwrap()
}

fn reconstruction(c: &mut Criterion) {
    let mut g = c.benchmark_group("reconstruct_joint");
    g.sample_size(20);
    for features in [4, 8, 14, 19] {
        let data = binary_data(features, 5_000, 1);
        let attrs = features + 1;
        let matrices = BudgetAllocation::uniform(attrs as f64, attrs)
            .unwrap()
            .matrices(&vec![2; attrs])
            .unwrap();
        let perturbed = perturb_dataset(&data, &matrices, 2).unwrap();
        let lambda = observed_frequencies(&perturbed).unwrap();
        g.throughput(Throughput::Elements(1 << attrs));
        g.bench_with_input(BenchmarkId::from_parameter(1usize << attrs), &features, |b, _| {
            b.iter(|| reconstruct_joint(black_box(&lambda), &matrices, data.schema().clone()).unwrap())
        });
    }
    g.finish();
}

fn perturbation(c: &mut Criterion) {
    let mut g = c.benchmark_group("perturb_dataset");
    for rows in [1_000, 30_000] {
        let data = binary_data(14, rows, 3);
        let matrices = BudgetAllocation::uniform(15.0, 15).unwrap().matrices(&[2; 15]).unwrap();
        g.throughput(Throughput::Elements(rows as u64));
        g.bench_with_input(BenchmarkId::from_parameter(rows), &data, |b, d| {
            b.iter(|| perturb_dataset(black_box(d), &matrices, 4).unwrap())
        });
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let data = binary_data(14, 5_000, 5);
    let matrices = BudgetAllocation::uniform(15.0, 15).unwrap().matrices(&[2; 15]).unwrap();
    let lambda = observed_frequencies(&perturb_dataset(&data, &matrices, 6).unwrap()).unwrap();
    let dist = reconstruct_joint(&lambda, &matrices, data.schema().clone()).unwrap();
    let mut r = rng::seeded(7);
    c.bench_function("sample_reconstructed/k=8", |b| {
        b.iter(|| sample_reconstructed(black_box(&dist), 8, &mut r).unwrap())
    });
}

fn scalar_kernels(c: &mut Criterion) {
    let mut r = rng::seeded(8);
    c.bench_function("sample_laplace", |b| b.iter(|| sample_laplace(black_box(2.0), &mut r)));
    c.bench_function("amplify", |b| {
        b.iter(|| amplify(black_box(5.0), black_box(300), black_box(598)).unwrap())
    });
}

criterion_group!(benches, reconstruction, perturbation, sampling, scalar_kernels);
criterion_main!(benches);
