use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::superalgebra::{Form, FormMatrix, SuperElement};

/// c·exp(−½ vᵀAv)·T on pairs v = (x, z) ∈ ℝ^m × ℝ^m, with c and the entries of A in the even
/// (hence commutative) part of the exterior algebra and T an End(W)-valued factor independent of v.
#[derive(Debug, Clone)]
pub struct GaussianPolyKernel {
    m: usize,
    t: f64,
    prefactor: Form,
    quad: FormMatrix,
    twist: SuperElement,
}

fn is_even(f: &Form) -> bool {
    f.coeffs().iter().enumerate().all(|(b, c)| *c == 0.0 || (b as u32).count_ones() % 2 == 0)
}

impl GaussianPolyKernel {
    pub fn new(t: f64, prefactor: Form, quad: FormMatrix, twist: SuperElement) -> Result<Self> {
        let m = prefactor.dim();
        if quad.nrows() != 2 * m || quad.ncols() != 2 * m {
            return Err(Error::Shape(format!("quadratic form must be {0}×{0}", 2 * m)));
        }
        if twist.dim() != m {
            return Err(Error::Shape("twist factor has the wrong number of generators".into()));
        }
        let even = is_even(&prefactor) && (0..2 * m).all(|i| (0..2 * m).all(|j| is_even(&quad[(i, j)])));
        if !even {
            return Err(Error::InvalidArgument("Gaussian kernel coefficients must be even forms".into()));
        }
        Ok(GaussianPolyKernel { m, t, prefactor, quad, twist })
    }

    /// (2πt)^{−m/2}e^{−|z−x|²/2t}, optionally with the cross term ⟨Rx, z⟩/4 and twist factor.
    pub(crate) fn heat(m: usize, t: f64, rbar: Option<&FormMatrix>, twist: SuperElement) -> Self {
        let mut quad = FormMatrix::zeros(2 * m, 2 * m, m);
        for i in 0..m {
            quad[(i, i)] = Form::scalar(m, 1.0 / t);
            quad[(m + i, m + i)] = Form::scalar(m, 1.0 / t);
            quad[(i, m + i)] = Form::scalar(m, -1.0 / t);
            quad[(m + i, i)] = Form::scalar(m, -1.0 / t);
        }
        if let Some(r) = rbar {
            // ⟨R̄x, z⟩/4 = −½ vᵀCv with C_{x_k, z_l} = −R̄_{lk}/4
            for k in 0..m {
                for l in 0..m {
                    let c = r[(l, k)].scale(-0.25);
                    quad[(k, m + l)] = &quad[(k, m + l)] + &c;
                    quad[(m + l, k)] = &quad[(m + l, k)] + &c;
                }
            }
        }
        GaussianPolyKernel { m, t, prefactor: Form::scalar(m, (2.0 * PI * t).powf(-(m as f64) / 2.0)), quad, twist }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn prefactor(&self) -> &Form {
        &self.prefactor
    }

    pub fn quadratic_form(&self) -> &FormMatrix {
        &self.quad
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> SuperElement {
        let m = self.m;
        let v: Vec<f64> = x.iter().chain(z).cloned().collect();
        let mut e = Form::zero(m);
        for a in 0..2 * m {
            for b in 0..2 * m {
                if v[a] != 0.0 && v[b] != 0.0 {
                    e += &self.quad[(a, b)].scale(-0.5 * v[a] * v[b]);
                }
            }
        }
        let g = self.prefactor.wedge(&e.exp());
        SuperElement::from_form(&g, self.twist.fiber()).mul(&self.twist)
    }

    fn block(&self, r0: usize, c0: usize) -> FormMatrix {
        let m = self.m;
        let mut out = FormMatrix::zeros(m, m, m);
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] = self.quad[(r0 + i, c0 + j)].clone();
            }
        }
        out
    }

    /// Exact ∫ self(x,y)·other(y,z) dy by the Gaussian integral with nilpotent coefficients.
    pub fn convolve(&self, other: &GaussianPolyKernel) -> Result<GaussianPolyKernel> {
        let m = self.m;
        if other.m != m || other.twist.fiber() != self.twist.fiber() {
            return Err(Error::Shape("convolving flat-model kernels of different shapes".into()));
        }
        let (axx, axy, ayx) = (self.block(0, 0), self.block(0, m), self.block(m, 0));
        let (byy, bxy, byx) = (other.block(m, m), other.block(0, m), other.block(m, 0));
        let mm = self.block(m, m).add(&other.block(0, 0));
        let minv = mm.inverse()?;
        let det = mm.det()?;
        let nxx = axx.sub(&axy.matmul(&minv).matmul(&ayx));
        let nzz = byy.sub(&byx.matmul(&minv).matmul(&bxy));
        let nxz = axy.matmul(&minv).matmul(&bxy).scale(-1.0);
        let mut quad = FormMatrix::zeros(2 * m, 2 * m, m);
        for i in 0..m {
            for j in 0..m {
                quad[(i, j)] = nxx[(i, j)].clone();
                quad[(m + i, m + j)] = nzz[(i, j)].clone();
                quad[(i, m + j)] = nxz[(i, j)].clone();
                quad[(m + j, i)] = nxz[(i, j)].clone();
            }
        }
        let prefactor = self.prefactor.wedge(&other.prefactor).wedge(&det.powf(-0.5)?).scale((2.0 * PI).powf(m as f64 / 2.0));
        Ok(GaussianPolyKernel { m, t: self.t + other.t, prefactor, quad, twist: self.twist.mul(&other.twist) })
    }
}
