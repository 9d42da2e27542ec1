use std::sync::Arc;

use heatslice::cli::ExperimentConfig;
use heatslice::geometry::ModelManifold;
use heatslice::kernels::{approx_heat_kernel, star_product_with, GeneralizedLaplacianSpec};
use heatslice::oracle::periodic_gaussian;
use heatslice::par::Execution;
use heatslice::superalgebra::clifford::{clifford_matrix, grading, grading_conjugate, supertrace_scalar};
use heatslice::superalgebra::CliffordElement;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn clifford_from(m: usize, coeffs: &[f64]) -> CliffordElement {
    coeffs.iter().enumerate().fold(CliffordElement::zero(m), |acc, (b, c)| acc.add(&CliffordElement::monomial(m, b as u32, *c)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_round_trips(seed in 0..=i64::MAX as u64, t in 1e-3f64..10.0, radius in 0.1f64..5.0, depth in 0u32..8, threads in proptest::option::of(1usize..64)) {
        let mut c = ExperimentConfig { seed, threads, ..Default::default() };
        c.time.t = t;
        c.manifold.radius = radius;
        c.partition.max_depth = depth;
        c.tolerances.kr_order = t / 10.0;
        let back = ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn periodic_gaussian_is_symmetric_and_positive(x in -3.0f64..3.0, y in -3.0f64..3.0, t in 0.05f64..2.0) {
        let p = [2.0 * std::f64::consts::PI];
        let a = periodic_gaussian(&p, &[x], &[y], t);
        prop_assert!(a > 0.0);
        prop_assert!((a - periodic_gaussian(&p, &[y], &[x], t)).abs() <= 1e-11 * a);
        prop_assert!((a - periodic_gaussian(&p, &[x + p[0]], &[y], t)).abs() <= 1e-11 * a);
    }

    #[test]
    fn supertrace_kills_graded_commutators(u in proptest::collection::vec(-1.0f64..1.0, 16), v in proptest::collection::vec(-1.0f64..1.0, 16)) {
        let m = 4;
        let a = clifford_matrix(&clifford_from(m, &u));
        let b = clifford_matrix(&clifford_from(m, &v));
        let g = grading(m);
        let parity = |x: &DMatrix<f64>| &g * x * &g;
        let (a0, a1) = ((&a + parity(&a)) / 2.0, (&a - parity(&a)) / 2.0);
        let (b0, b1) = ((&b + parity(&b)) / 2.0, (&b - parity(&b)) / 2.0);
        let comm = &a0 * &b - &b * &a0 + &a1 * &b0 - &b0 * &a1 + &a1 * &b1 + &b1 * &a1;
        prop_assert!(supertrace_scalar(&comm, m, 1).unwrap().abs() < 1e-10);
    }

    #[test]
    fn grading_conjugation_is_multiplicative(u in proptest::collection::vec(-1.0f64..1.0, 16), v in proptest::collection::vec(-1.0f64..1.0, 16), r in 0.1f64..3.0) {
        let m = 4;
        let a = clifford_matrix(&clifford_from(m, &u));
        let b = clifford_matrix(&clifford_from(m, &v));
        let lhs = grading_conjugate(&(&a * &b), m, 1, r).unwrap();
        let rhs = grading_conjugate(&a, m, 1, r).unwrap() * grading_conjugate(&b, m, 1, r).unwrap();
        prop_assert!((lhs - rhs).amax() < 1e-9 * (1.0 + r.powi(4)));
    }
}

#[test]
fn sequential_and_parallel_star_products_agree() {
    let sphere = ModelManifold::sphere(1.0);
    let grid = Arc::new(sphere.quadrature_grid(&[10, 20]).unwrap());
    let k = approx_heat_kernel(&GeneralizedLaplacianSpec::scalar(sphere), &grid, 0.3).unwrap();
    let s = star_product_with(&k, &k, Execution::Sequential).unwrap();
    let p = star_product_with(&k, &k, Execution::Parallel).unwrap();
    assert!((s.data() - p.data()).amax() < 1e-13 * s.sup_norm());
    assert!((s.time() - 0.6).abs() < 1e-15);
}
