use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mmlab_core::bessel::bessel_i_scaled_orders;
use mmlab_core::green::{green_bilaplacian, BoxOperator};
use mmlab_core::percolation::{crossing_threshold, label_clusters, threshold, Adjacency};
use mmlab_core::sampler::{DirichletSampler, Sampler, TorusSampler};
use mmlab_core::{LatticeVector, QuadratureSpec};

fn bessel(c: &mut Criterion) {
    let mut out = vec![0.0; 8];
    c.bench_function("bessel_i_scaled_orders_0..8", |b| {
        b.iter(|| {
            for z in [0.1, 1.0, 10.0, 40.0] {
                bessel_i_scaled_orders(black_box(z), &mut out);
            }
            out[7]
        })
    });
}

fn quadrature(c: &mut Criterion) {
    let spec = QuadratureSpec::with_tol(1e-10);
    let mut g = c.benchmark_group("green_bilaplacian_d5");
    for x in [vec![0, 0, 0, 0, 0], vec![2, 1, 0, 0, 0]] {
        let v = LatticeVector::new(x.clone()).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(format!("{x:?}")), &v, |b, v| {
            b.iter(|| green_bilaplacian(black_box(v), &spec).unwrap().value)
        });
    }
    g.finish();
}

fn labeling(c: &mut Criterion) {
    let torus = TorusSampler::new(vec![12; 5]).unwrap();
    let sample = torus.sample(1, 0).unwrap();
    c.bench_function("label_clusters_torus12_d5", |b| {
        b.iter(|| {
            let grid = threshold(&sample, 0.0).unwrap();
            label_clusters(&grid, Adjacency::NearestNeighbor).cluster_count()
        })
    });
    c.bench_function("crossing_threshold_L2_torus12_d5", |b| b.iter(|| crossing_threshold(&sample, 2).unwrap()));
}

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("sampling");
    g.sample_size(20);
    let torus = TorusSampler::new(vec![16; 5]).unwrap();
    g.bench_function("torus16_d5_pair", |b| b.iter(|| torus.sample_pair(1, black_box(0)).0[0]));
    let dir = DirichletSampler::new(3, 5).unwrap();
    g.bench_function("dirichlet_N3_d5", |b| b.iter(|| dir.sample(1, black_box(0)).unwrap().values[0]));
    let op = BoxOperator::new(3, 5).unwrap();
    let f: Vec<f64> = (0..op.len()).map(|i| (i as f64).sin()).collect();
    let (mut out, mut scratch) = (vec![0.0; op.len()], vec![0.0; op.len()]);
    g.bench_function("bilaplacian_N3_d5", |b| {
        b.iter(|| {
            op.bilaplacian(black_box(&f), &mut out, &mut scratch);
            out[0]
        })
    });
    g.finish();
}

criterion_group!(benches, bessel, quadrature, labeling, sampling);
criterion_main!(benches);
