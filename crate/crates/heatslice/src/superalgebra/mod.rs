//! Clifford and exterior algebra, Berezin integration and nilpotent coefficient algebra.

pub mod blade;
pub mod clifford;
pub mod element;
pub mod form;

use nalgebra::DMatrix;

pub use blade::Blade;
pub use clifford::{
    clifford_action, clifford_symbol, commutant_residual, grading_conjugate, rho, rho_k, supertrace, supertrace_scalar,
    CliffordElement,
};
pub use element::SuperElement;
pub use form::{asqrt_det, Form, FormMatrix};

use crate::error::{Error, Result};
use crate::geometry::Riemann;

/// Curvature blocks F_ij, i,j = 0..m, each acting on the fiber.
pub type CurvatureBlocks = Vec<Vec<DMatrix<f64>>>;

/// −¼ Σ_kl R_ijkl c(e^k)c(e^l) with R in an orthonormal frame.
pub fn spin_curvature(riemann: &Riemann, c: &[DMatrix<f64>]) -> CurvatureBlocks {
    let m = riemann.dim();
    let n = c[0].nrows();
    let prods: Vec<Vec<DMatrix<f64>>> = (0..m).map(|k| (0..m).map(|l| &c[k] * &c[l]).collect()).collect();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut out = DMatrix::zeros(n, n);
                    for k in 0..m {
                        for l in 0..m {
                            let r = riemann.get(i, j, k, l);
                            if r != 0.0 {
                                out -= &prods[k][l] * (0.25 * r);
                            }
                        }
                    }
                    out
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CurvatureSplit {
    pub twist: CurvatureBlocks,
    pub residual: f64,
}

/// F_twist = F_full − spin part, checked to commute with every c(e^p).
pub fn decompose_clifford_curvature(full: &CurvatureBlocks, riemann: &Riemann, c: &[DMatrix<f64>], tol: f64) -> Result<CurvatureSplit> {
    let m = riemann.dim();
    if full.len() != m || c.len() != m {
        return Err(Error::Shape(format!("expected {m} curvature rows and generators")));
    }
    let spin = spin_curvature(riemann, c);
    let mut residual: f64 = 0.0;
    let twist: CurvatureBlocks = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let t = &full[i][j] - &spin[i][j];
                    for cp in c {
                        residual = residual.max((&t * cp - cp * &t).amax());
                    }
                    t
                })
                .collect()
        })
        .collect();
    if residual > tol {
        return Err(Error::CommutantResidual { residual, tol });
    }
    Ok(CurvatureSplit { twist, residual })
}
