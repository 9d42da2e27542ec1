use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use heatslice::geometry::ModelManifold;
use heatslice::kernels::{approx_heat_kernel, star_product_with, GeneralizedLaplacianSpec};
use heatslice::par::Execution;

fn star_products(c: &mut Criterion) {
    let sphere = ModelManifold::sphere(1.0);
    let spec = GeneralizedLaplacianSpec::scalar(sphere.clone());
    let mut group = c.benchmark_group("star_product");
    group.sample_size(10);
    for res in [[12, 24], [24, 48]] {
        let grid = Arc::new(sphere.quadrature_grid(&res).unwrap());
        let k = approx_heat_kernel(&spec, &grid, 0.25).unwrap();
        let nodes = grid.len();
        for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(label, nodes), &k, |b, k| b.iter(|| star_product_with(k, k, exec).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, star_products);
criterion_main!(benches);
