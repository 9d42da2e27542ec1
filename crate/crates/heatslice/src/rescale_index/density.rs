use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use super::family::wedge_action;
use crate::dirac::CliffordBundleSpec;
use crate::error::{Error, Result};
use crate::flatmodel::{k0_closed_form, FlatModelData};
use crate::geometry::{QuadratureGrid, Riemann};
use crate::superalgebra::blade;
use crate::superalgebra::clifford::{clifford_blade, clifford_matrix, grading_conjugate, rho_k, supertrace_scalar, with_twist, CliffordElement};
use crate::superalgebra::{CurvatureBlocks, SuperElement};

/// K_0(0, 0; t) at a point and the resulting index integrand.
#[derive(Debug, Clone)]
pub struct IndexDensity {
    pub point: Vec<f64>,
    pub t: f64,
    pub density: SuperElement,
    /// Str(c(e_1⋯e_m) · top coefficient), a density against the Riemannian volume.
    pub integrand: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub point: Vec<f64>,
    pub t: f64,
    pub density: serde_json::Value,
    pub integrand: f64,
    pub integral: Option<f64>,
}

impl IndexDensity {
    pub fn report(&self, integral: Option<f64>) -> DensityReport {
        DensityReport { point: self.point.clone(), t: self.t, density: self.density.to_json(), integrand: self.integrand, integral }
    }
}

/// The density of the flat model with frame curvature `riemann` and commutant twist blocks of size n = 2^m·n_w.
pub fn index_density(riemann: &Riemann, twist: &CurvatureBlocks, n_w: usize, t: f64) -> Result<IndexDensity> {
    let m = riemann.dim();
    if m % 2 == 1 {
        return Err(Error::OddDimension(m));
    }
    let n = (1 << m) * n_w;
    let data = FlatModelData::from_curvature(riemann, Some(twist), n)?;
    let density = k0_closed_form(&data, t)?;
    let top = density.coeff(blade::full(m));
    let volume = with_twist(&clifford_blade(m, blade::full(m)), n_w);
    let integrand = supertrace_scalar(&(volume * top), m, n_w)?;
    Ok(IndexDensity { point: vec![], t, density, integrand })
}

pub fn bundle_index_density(bundle: &CliffordBundleSpec, x: &[f64], t: f64) -> Result<IndexDensity> {
    let manifold = bundle.manifold();
    let riemann = manifold.curvature_at(x)?.riemann.in_frame(&manifold.orthonormal_frame(x)?);
    let twist = bundle.twist_curvature(x)?;
    let mut d = index_density(&riemann, &twist, bundle.twist_fiber(), t)?;
    d.point = x.to_vec();
    Ok(d)
}

/// ∫_M integrand dvol by the grid quadrature.
pub fn index_integral(bundle: &CliffordBundleSpec, grid: &QuadratureGrid, t: f64) -> Result<f64> {
    (0..grid.len()).map(|i| Ok(bundle_index_density(bundle, grid.node_slice(i), t)?.integrand * grid.weight(i))).sum()
}

/// lim_{r→0} r^{2k}ψ_r^{-1}c_Λ(A)ψ_r, by Richardson extrapolation from r0, r0/2 and r0/4, and its distance to
/// the wedge action of ρ_{2k}(A).
pub fn symbol_limit(a: &CliffordElement, k: u32, r0: f64) -> Result<(DMatrix<f64>, f64)> {
    let m = a.dim();
    let c = clifford_matrix(a);
    let at = |r: f64| grading_conjugate(&c, m, 1, r).map(|x| x * r.powi(2 * k as i32));
    // removes the O(r) and O(r²) terms
    let limit = (at(r0)? - at(0.5 * r0)? * 6.0 + at(0.25 * r0)? * 8.0) / 3.0;
    let expect = wedge_action(&rho_k(a, k));
    let residual = (&limit - expect).amax();
    Ok((limit, residual))
}

/// Euler density scal/(4π) of the round sphere of radius a.
pub fn sphere_euler_density(radius: f64) -> f64 {
    1.0 / (2.0 * PI * radius * radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConnectionSpec, ModelManifold};
    use std::sync::Arc;

    #[test]
    fn sphere_index_is_euler_characteristic() {
        for a in [1.0, 2.0] {
            let s = ModelManifold::sphere(a);
            let grid = s.quadrature_grid(&[12, 24]).unwrap();
            let b = CliffordBundleSpec::forms(s).unwrap();
            let d = bundle_index_density(&b, &[1.0, 0.5], 0.3).unwrap();
            assert!((d.integrand - sphere_euler_density(a)).abs() < 1e-7, "{}", d.integrand);
            assert!((index_integral(&b, &grid, 0.3).unwrap() - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn torus_index_vanishes() {
        let s = ModelManifold::torus(&[2.0 * PI, 3.0]);
        let grid = s.quadrature_grid(&[6, 6]).unwrap();
        let b = CliffordBundleSpec::forms(s).unwrap();
        assert!(index_integral(&b, &grid, 0.5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn density_is_time_independent_on_sphere() {
        let b = CliffordBundleSpec::forms(ModelManifold::sphere(1.0)).unwrap();
        let a = bundle_index_density(&b, &[0.8, 0.1], 0.1).unwrap().integrand;
        let c = bundle_index_density(&b, &[0.8, 0.1], 2.0).unwrap().integrand;
        assert!((a - c).abs() < 1e-9);
    }

    #[test]
    fn magnetic_twist_on_torus_gives_flux() {
        // W = ℝ² with F = B J: the twisted index density is Str(c(e_12)·(−tF̄/2 top term)) ∝ B
        let bfield = 0.7;
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let jj = j.clone();
        let form: crate::geometry::ConnectionForm = Arc::new(move |x: &[f64]| vec![DMatrix::zeros(2, 2), &jj * (bfield * x[0])]);
        let b = CliffordBundleSpec::twisted(ModelManifold::torus(&[10.0, 10.0]), ConnectionSpec::one_form(2, form)).unwrap();
        let d1 = bundle_index_density(&b, &[0.3, 0.2], 0.4).unwrap().integrand;
        let d2 = bundle_index_density(&b, &[0.3, 0.2], 1.1).unwrap().integrand;
        assert!((d1 - d2).abs() < 1e-9);
        // Tr_W(J) = 0: a real rank-2 bundle has no first Chern class
        assert!(d1.abs() < 1e-9);
    }

    #[test]
    fn odd_dimension_is_rejected() {
        let r = Riemann::zeros(3);
        assert!(matches!(index_density(&r, &vec![], 1, 0.1), Err(Error::OddDimension(3))));
    }

    #[test]
    fn symbol_limit_matches_rho() {
        let m = 4;
        let e = |b: u32, a: f64| CliffordElement::monomial(m, b, a);
        let a2 = e(0b0011, 1.0).add(&e(0b0110, -0.7)).add(&e(0b0001, 0.4)).add(&e(0, 2.0));
        let a4 = e(0b1111, 0.5).add(&e(0b0101, 1.3)).add(&e(0b1110, -0.2));
        for (a, k) in [(a2, 1), (a4, 2)] {
            let (_, res) = symbol_limit(&a, k, 1e-3).unwrap();
            assert!(res < 1e-6, "{res}");
        }
    }
}
