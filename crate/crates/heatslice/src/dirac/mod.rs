//! Clifford modules realized on Λℝ^m ⊗ W, the squared twisted Dirac operator,
//! Berezin-integral kernels and McKean–Singer supertraces.

mod berezin;
mod index;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{frame_connection_form, ConnectionSpec, ModelManifold};
use crate::kernels::{GeneralizedLaplacianSpec, Potential, PotentialFn};
use crate::superalgebra::clifford::{clifford_generator, two_form_action, with_twist};
use crate::superalgebra::{decompose_clifford_curvature, CurvatureBlocks};

pub use berezin::{berezin_kernel, exterior_matrix_kernel, SusyKernelForm};
pub use index::{mckean_singer_index, mckean_singer_index_with, supertrace_integral, IndexReport, Richardson};

const CURVATURE_STEP: f64 = 1e-3;

/// A Clifford module Λℝ^m ⊗ W with the Levi-Civita connection on the Λ factor and
/// a twisting connection on W.
#[derive(Debug, Clone)]
pub struct CliffordBundleSpec {
    manifold: ModelManifold,
    twist: ConnectionSpec,
    tol: f64,
}

impl CliffordBundleSpec {
    /// Λ T*M itself (trivial W), the Gauss–Bonnet realization.
    pub fn forms(manifold: ModelManifold) -> Result<Self> {
        Self::twisted(manifold, ConnectionSpec::trivial(1))
    }

    pub fn twisted(manifold: ModelManifold, twist: ConnectionSpec) -> Result<Self> {
        let m = manifold.dim();
        if m % 2 == 1 {
            return Err(Error::OddDimension(m));
        }
        Ok(CliffordBundleSpec { manifold, twist, tol: 1e-8 })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn twist_fiber(&self) -> usize {
        self.twist.fiber()
    }

    pub fn fiber(&self) -> usize {
        (1 << self.dim()) * self.twist_fiber()
    }

    pub fn label(&self) -> String {
        if self.twist.is_trivial() && self.twist_fiber() == 1 {
            "forms".into()
        } else {
            format!("forms ⊗ W(n={})", self.twist_fiber())
        }
    }

    /// c(e^a) in the orthonormal coframe.
    pub fn clifford_generators(&self) -> Vec<DMatrix<f64>> {
        let m = self.dim();
        (0..m).map(|a| with_twist(&clifford_generator(m, a), self.twist_fiber())).collect()
    }

    pub fn connection(&self) -> ConnectionSpec {
        ConnectionSpec::product(ConnectionSpec::levi_civita_forms(self.dim()), self.twist.clone())
    }

    /// max_{i,a} ‖[A_i, c(e^a)] − c(∇_i e^a)‖ at x.
    pub fn clifford_connection_residual(&self, x: &[f64]) -> Result<f64> {
        let a = self.connection().connection_form(&self.manifold, x)?;
        let w = frame_connection_form(&self.manifold, x)?;
        let c = self.clifford_generators();
        let mut res: f64 = 0.0;
        for (ai, wi) in a.iter().zip(&w) {
            for (p, cp) in c.iter().enumerate() {
                let mut rhs = DMatrix::zeros(cp.nrows(), cp.ncols());
                for (q, cq) in c.iter().enumerate() {
                    rhs += cq * wi[(q, p)];
                }
                res = res.max((ai * cp - cp * ai - rhs).amax());
            }
        }
        Ok(res)
    }

    /// Curvature F_ab of the full connection in the orthonormal frame.
    pub fn curvature(&self, x: &[f64]) -> Result<CurvatureBlocks> {
        let m = self.dim();
        let n = self.fiber();
        let conn = self.connection();
        let a0 = conn.connection_form(&self.manifold, x)?;
        let h = CURVATURE_STEP;
        // ∂_i A_j by a fourth-order centred stencil
        let mut da: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(m);
        for i in 0..m {
            let at = |s: f64| -> Result<Vec<DMatrix<f64>>> {
                let mut p = x.to_vec();
                p[i] += s;
                conn.connection_form(&self.manifold, &p)
            };
            let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
            da.push((0..m).map(|j| ((&p1[j] - &m1[j]) * 8.0 - (&p2[j] - &m2[j])) / (12.0 * h)).collect());
        }
        let coord: Vec<Vec<DMatrix<f64>>> = (0..m)
            .map(|i| (0..m).map(|j| &da[i][j] - &da[j][i] + &a0[i] * &a0[j] - &a0[j] * &a0[i]).collect())
            .collect();
        let e = self.manifold.orthonormal_frame(x)?;
        Ok((0..m)
            .map(|p| {
                (0..m)
                    .map(|q| {
                        let mut f = DMatrix::zeros(n, n);
                        for i in 0..m {
                            for j in 0..m {
                                let w = e[(i, p)] * e[(j, q)];
                                if w != 0.0 {
                                    f += &coord[i][j] * w;
                                }
                            }
                        }
                        f
                    })
                    .collect()
            })
            .collect())
    }

    /// F_twist: the part of the curvature commuting with the Clifford action.
    pub fn twist_curvature(&self, x: &[f64]) -> Result<CurvatureBlocks> {
        let full = self.curvature(x)?;
        let e = self.manifold.orthonormal_frame(x)?;
        let riemann = self.manifold.curvature_at(x)?.riemann.in_frame(&e);
        Ok(decompose_clifford_curvature(&full, &riemann, &self.clifford_generators(), self.tol)?.twist)
    }

    /// V(x) = c(F_twist) + scal/4, so that Δ^∇ − V = −D².
    pub fn dirac_potential(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let twist = self.twist_curvature(x)?;
        let scal = self.manifold.scalar_curvature(x)?;
        let n = self.fiber();
        Ok(two_form_action(&self.clifford_generators(), &twist) + DMatrix::identity(n, n) * (scal / 4.0))
    }

    fn probe_point(&self) -> Vec<f64> {
        match &self.manifold {
            ModelManifold::RoundSphere { .. } => vec![1.1, 0.7],
            m => vec![0.1; m.dim()],
        }
    }
}

/// The generalized Laplacian −D² of the twisted Dirac operator.
pub fn dirac_square_spec(bundle: &CliffordBundleSpec) -> Result<GeneralizedLaplacianSpec> {
    let probe = bundle.probe_point();
    let residual = bundle.clifford_connection_residual(&probe)?;
    if residual > bundle.tol {
        return Err(Error::CommutantResidual { residual, tol: bundle.tol });
    }
    let v0 = bundle.dirac_potential(&probe)?;
    let potential = if bundle.manifold.is_analytic() && v0.amax() == 0.0 && bundle.twist.is_trivial() {
        Potential::Zero
    } else {
        let b = bundle.clone();
        let n = bundle.fiber();
        let f: PotentialFn = std::sync::Arc::new(move |x: &[f64]| b.dirac_potential(x).unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN)));
        Potential::Field(f)
    };
    Ok(GeneralizedLaplacianSpec::new(bundle.manifold.clone(), bundle.connection(), potential))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    use crate::geometry::ConnectionForm;
    use crate::superalgebra::blade;

    fn weitzenbock_forms(m: usize, ric: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_fn(1 << m, |b, _| if blade::grade(b as u32) == 1 { ric } else { 0.0 }))
    }

    #[test]
    fn flat_torus_has_no_potential() {
        let b = CliffordBundleSpec::forms(ModelManifold::torus(&[2.0 * PI, 2.0 * PI])).unwrap();
        let spec = dirac_square_spec(&b).unwrap();
        assert!(spec.potential.is_zero());
    }

    #[test]
    fn sphere_forms_potential_is_weitzenbock() {
        for a in [1.0, 2.0] {
            let b = CliffordBundleSpec::forms(ModelManifold::sphere(a)).unwrap();
            for x in [[0.4, 0.3], [1.3, 2.0], [2.5, 5.0]] {
                let v = b.dirac_potential(&x).unwrap();
                assert!((v - weitzenbock_forms(2, 1.0 / (a * a))).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn levi_civita_is_a_clifford_connection() {
        let b = CliffordBundleSpec::forms(ModelManifold::sphere(1.0)).unwrap();
        assert!(b.clifford_connection_residual(&[0.9, 1.7]).unwrap() < 1e-12);
    }

    #[test]
    fn twist_curvature_recovers_magnetic_field() {
        // W = ℝ² with A_y = B x J on the flat plane: F_xy = B J
        let bfield = 0.7;
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let jj = j.clone();
        let form: ConnectionForm = Arc::new(move |x: &[f64]| vec![DMatrix::zeros(2, 2), &jj * (bfield * x[0])]);
        let b = CliffordBundleSpec::twisted(ModelManifold::torus(&[10.0, 10.0]), ConnectionSpec::one_form(2, form)).unwrap();
        let f = b.twist_curvature(&[0.3, 0.2]).unwrap();
        let expect = DMatrix::<f64>::identity(4, 4).kronecker(&(&j * bfield));
        assert!((&f[0][1] - expect).amax() < 1e-9);
        let v = b.dirac_potential(&[0.3, 0.2]).unwrap();
        let c = b.clifford_generators();
        assert!((v - &f[0][1] * &c[0] * &c[1]).amax() < 1e-9);
    }

    #[test]
    fn odd_dimension_is_rejected() {
        assert!(matches!(CliffordBundleSpec::forms(ModelManifold::torus(&[1.0])), Err(Error::OddDimension(1))));
    }
}
