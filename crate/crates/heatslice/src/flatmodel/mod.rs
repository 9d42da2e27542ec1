//! The flat model: Gaussian kernels on ℝ^m with nilpotent curvature coefficients, computed exactly.

mod duhamel;
mod gaussian;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Riemann;
use crate::kernels::Partition;
use crate::superalgebra::{asqrt_det, CurvatureBlocks, Form, FormMatrix, SuperElement};

pub use duhamel::{duhamel_series, duhamel_series_with};
pub use gaussian::GaussianPolyKernel;

/// Curvature data of the flat model: R̄ (an m×m matrix of 2-forms) and F̄ (a 2-form with End(W) coefficients).
#[derive(Debug, Clone)]
pub struct FlatModelData {
    pub(crate) m: usize,
    pub(crate) n_w: usize,
    pub(crate) rbar: FormMatrix,
    pub(crate) fbar: SuperElement,
}

/// Wire format: entry (i, j, k, l, v) is R_{ijk}^l = v, entry (i, j, F) is F_ij = F; indices start at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatModelJson {
    pub m: usize,
    #[serde(default)]
    pub fiber: Option<usize>,
    #[serde(rename = "R_entries", default)]
    pub r_entries: Vec<(usize, usize, usize, usize, f64)>,
    #[serde(rename = "F_entries", default)]
    pub f_entries: Vec<(usize, usize, Vec<Vec<f64>>)>,
}

const ANTISYMMETRY_TOL: f64 = 1e-12;

impl FlatModelData {
    pub fn new(rbar: FormMatrix, fbar: SuperElement) -> Result<Self> {
        let m = rbar.dim();
        if rbar.nrows() != m || rbar.ncols() != m || fbar.dim() != m {
            return Err(Error::Shape(format!("R̄ must be {m}×{m} over {m} generators")));
        }
        let defect = rbar.antisymmetry_defect();
        if defect > ANTISYMMETRY_TOL * (1.0 + rbar.max_abs()) {
            return Err(Error::NotAntisymmetric(defect));
        }
        let pure = (0..m).all(|i| (0..m).all(|j| rbar[(i, j)].degree_part(2).max_abs() == rbar[(i, j)].max_abs()));
        let fpure = fbar.iter().all(|(b, _)| b.count_ones() == 2);
        if !pure || !fpure {
            return Err(Error::InvalidArgument("flat-model curvature must be pure 2-forms".into()));
        }
        Ok(FlatModelData { m, n_w: fbar.fiber(), rbar, fbar })
    }

    pub fn zero(m: usize, n_w: usize) -> Self {
        FlatModelData { m, n_w, rbar: FormMatrix::zeros(m, m, m), fbar: SuperElement::zero(m, n_w) }
    }

    /// R̄^l_k = ½ Σ_ij R_{ijk}^l e^i∧e^j and F̄ = ½ Σ_ij F_ij e^i∧e^j from an orthonormal-frame Riemann
    /// tensor (stored as ⟨R(e_i,e_j)e_l, e_k⟩) and optional twist curvature blocks.
    pub fn from_curvature(riemann: &Riemann, twist: Option<&CurvatureBlocks>, n_w: usize) -> Result<Self> {
        let m = riemann.dim();
        let mut rbar = FormMatrix::zeros(m, m, m);
        for l in 0..m {
            for k in 0..m {
                let mut f = Form::zero(m);
                for i in 0..m {
                    for j in 0..m {
                        let v = riemann.get(i, j, l, k);
                        if i != j && v != 0.0 {
                            f += &Form::two_form(m, i, j, 0.5 * v);
                        }
                    }
                }
                rbar[(l, k)] = f;
            }
        }
        let mut fbar = SuperElement::zero(m, n_w);
        if let Some(blocks) = twist {
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        fbar = &fbar + &SuperElement::form_times(&Form::two_form(m, i, j, 0.5), &blocks[i][j]);
                    }
                }
            }
        }
        Self::new(rbar, fbar)
    }

    pub fn from_json(j: &FlatModelJson) -> Result<Self> {
        let m = j.m;
        let n_w = j.fiber.or_else(|| j.f_entries.first().map(|e| e.2.len())).unwrap_or(1);
        let mut rbar = FormMatrix::zeros(m, m, m);
        for &(i, jj, k, l, v) in &j.r_entries {
            if i.max(jj).max(k).max(l) >= m || i == jj {
                return Err(Error::InvalidArgument(format!("bad curvature entry ({i},{jj},{k},{l})")));
            }
            rbar[(l, k)] = &rbar[(l, k)] + &Form::two_form(m, i, jj, 0.5 * v);
        }
        let mut fbar = SuperElement::zero(m, n_w);
        for (i, jj, mat) in &j.f_entries {
            if (*i).max(*jj) >= m || i == jj || mat.len() != n_w || mat.iter().any(|r| r.len() != n_w) {
                return Err(Error::InvalidArgument(format!("bad twist entry ({i},{jj})")));
            }
            let a = DMatrix::from_fn(n_w, n_w, |r, c| mat[r][c]);
            fbar = &fbar + &SuperElement::form_times(&Form::two_form(m, *i, *jj, 0.5), &a);
        }
        Self::new(rbar, fbar)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn fiber(&self) -> usize {
        self.n_w
    }

    pub fn rbar(&self) -> &FormMatrix {
        &self.rbar
    }

    pub fn fbar(&self) -> &SuperElement {
        &self.fbar
    }

    fn twist_factor(&self, t: f64) -> SuperElement {
        self.fbar.scale(-t / 2.0).nilpotent_exp()
    }

    pub fn heat_kernel(&self, t: f64) -> GaussianPolyKernel {
        GaussianPolyKernel::heat(self.m, t, None, SuperElement::identity(self.m, self.n_w))
    }

    pub fn k0(&self, t: f64) -> GaussianPolyKernel {
        GaussianPolyKernel::heat(self.m, t, Some(&self.rbar), self.twist_factor(t))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time must be positive, got {t}")))
    }
}

pub fn h_flat(m: usize, x: &[f64], y: &[f64], t: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (2.0 * PI * t).powf(-(m as f64) / 2.0) * (-d2 / (2.0 * t)).exp()
}

/// K_0(x,y;t) = H_flat·exp(⟨R̄x, y − x⟩/4 − tF̄/2)
pub fn k0_kernel(data: &FlatModelData, x: &[f64], y: &[f64], t: f64) -> Result<SuperElement> {
    check_time(t)?;
    let m = data.m;
    let mut cross = Form::zero(m);
    for l in 0..m {
        for k in 0..m {
            let c = x[k] * (y[l] - x[l]);
            if c != 0.0 {
                cross += &data.rbar[(l, k)].scale(0.25 * c);
            }
        }
    }
    let exponent = &SuperElement::from_form(&cross, data.n_w) + &data.fbar.scale(-t / 2.0);
    Ok(exponent.nilpotent_exp().scale(h_flat(m, x, y, t)))
}

/// K_0(t1) ∗ H_flat(t2), exactly.
pub fn mehler_step(data: &FlatModelData, t1: f64, t2: f64) -> Result<GaussianPolyKernel> {
    check_time(t1)?;
    check_time(t2)?;
    data.k0(t1).convolve(&data.heat_kernel(t2))
}

/// K_0^{*P}(0,0;t) by exact convolution of the slices.
pub fn k0_partition_diag(data: &FlatModelData, p: &Partition) -> Result<SuperElement> {
    let d = p.durations();
    let uniform = d.iter().all(|x| *x == d[0]);
    let kernel = if uniform {
        let base = data.k0(d[0]);
        let mut e = d.len();
        let mut sq = base;
        let mut acc: Option<GaussianPolyKernel> = None;
        loop {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => sq.clone(),
                    Some(a) => a.convolve(&sq)?,
                });
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            sq = sq.convolve(&sq)?;
        }
        acc.expect("nonempty partition")
    } else {
        let mut acc = data.k0(d[0]);
        for &ti in &d[1..] {
            acc = acc.convolve(&data.k0(ti))?;
        }
        acc
    };
    let zero = vec![0.0; data.m];
    Ok(kernel.eval(&zero, &zero))
}

/// (2πt)^{−m/2}·det^{1/2}((tR̄/4)/sinh(tR̄/4))·exp(−tF̄/2)
pub fn k0_closed_form(data: &FlatModelData, t: f64) -> Result<SuperElement> {
    check_time(t)?;
    let m = data.m;
    let det = asqrt_det(&data.rbar.scale(t / 4.0))?;
    Ok(SuperElement::from_form(&det, data.n_w).mul(&data.twist_factor(t)).scale((2.0 * PI * t).powf(-(m as f64) / 2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn generic_m2() -> FlatModelData {
        let j = FlatModelJson {
            m: 2,
            fiber: Some(2),
            r_entries: vec![(0, 1, 0, 1, 0.7), (1, 0, 0, 1, -0.7), (0, 1, 1, 0, -0.7), (1, 0, 1, 0, 0.7)],
            f_entries: vec![(0, 1, vec![vec![0.3, -0.4], vec![0.2, 0.5]]), (1, 0, vec![vec![-0.3, 0.4], vec![-0.2, -0.5]])],
        };
        FlatModelData::from_json(&j).unwrap()
    }

    #[test]
    fn zero_data_reduces_to_flat_gaussian() {
        let d = FlatModelData::zero(2, 1);
        let k = k0_kernel(&d, &[0.3, 0.1], &[-0.2, 0.4], 0.7).unwrap();
        assert_eq!(k.scalar_part()[(0, 0)], h_flat(2, &[0.3, 0.1], &[-0.2, 0.4], 0.7));
        assert_eq!(k.iter().count(), 1);
        let c = k0_closed_form(&d, 0.7).unwrap();
        assert!((c.scalar_part()[(0, 0)] - 1.0 / (2.0 * PI * 0.7)).abs() < 1e-15);
    }

    #[test]
    fn cross_term_oracle() {
        // R̄ = [[0, s e12], [−s e12, 0]], x = (1,0), y = (0,1): ⟨R̄x, y − x⟩ = (R̄x)_1·(−1) + (R̄x)_2·1 = −s e12
        let s = 0.9;
        let mut r = FormMatrix::zeros(2, 2, 2);
        r[(0, 1)] = Form::two_form(2, 0, 1, s);
        r[(1, 0)] = Form::two_form(2, 0, 1, -s);
        let d = FlatModelData::new(r, SuperElement::zero(2, 1)).unwrap();
        let k = k0_kernel(&d, &[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        let h = h_flat(2, &[1.0, 0.0], &[0.0, 1.0], 1.0);
        assert!((k.coeff(0b11)[(0, 0)] - h * (-s / 4.0)).abs() < 1e-16);
        assert!((k.scalar_part()[(0, 0)] - h).abs() < 1e-16);
    }

    #[test]
    fn diagonal_at_origin_is_twist_exponential() {
        let d = generic_m2();
        let k = k0_kernel(&d, &[0.0, 0.0], &[0.0, 0.0], 0.4).unwrap();
        let e = d.fbar.scale(-0.2).nilpotent_exp().scale(1.0 / (2.0 * PI * 0.4));
        assert!((&k - &e).max_abs() < 1e-15);
    }

    #[test]
    fn m2_closed_form_has_no_curvature_factor() {
        let d = generic_m2();
        let c = k0_closed_form(&d, 0.8).unwrap();
        let e = d.fbar.scale(-0.4).nilpotent_exp().scale(1.0 / (2.0 * PI * 0.8));
        assert!((&c - &e).max_abs() < 1e-15);
    }

    #[test]
    fn mehler_without_curvature_is_semigroup() {
        let d = FlatModelData::zero(2, 1);
        let g = mehler_step(&d, 0.3, 0.5).unwrap();
        let v = g.eval(&[0.2, -0.1], &[0.5, 0.3]);
        assert!((v.scalar_part()[(0, 0)] - h_flat(2, &[0.2, -0.1], &[0.5, 0.3], 0.8)).abs() < 1e-14);
        assert_eq!(v.iter().count(), 1);
    }

    #[test]
    fn twist_only_partition_is_exact() {
        let mut d = generic_m2();
        d.rbar = FormMatrix::zeros(2, 2, 2);
        let expect = k0_closed_form(&d, 1.0).unwrap();
        for n in [1, 3, 8] {
            let p = k0_partition_diag(&d, &Partition::equal(1.0, n).unwrap()).unwrap();
            assert!((&p - &expect).max_abs() < 1e-14);
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let j = FlatModelJson { m: 2, fiber: None, r_entries: vec![(0, 1, 0, 1, 1.0)], f_entries: vec![] };
        assert!(matches!(FlatModelData::from_json(&j), Err(Error::NotAntisymmetric(_))));
        let s = serde_json::to_string(&FlatModelJson { m: 2, fiber: Some(1), r_entries: vec![], f_entries: vec![] }).unwrap();
        let back: FlatModelJson = serde_json::from_str(&s).unwrap();
        assert_eq!(back.m, 2);
        assert!(serde_json::from_str::<FlatModelJson>(r#"{"m":2,"bogus":1}"#).is_err());
    }

    #[test]
    fn duhamel_zero_and_twist_only() {
        let d = FlatModelData::zero(2, 1);
        let s = duhamel_series(&d, 0.5).unwrap();
        assert!((s.scalar_part()[(0, 0)] - 1.0 / PI).abs() < 1e-15);
        let mut d = generic_m2();
        d.rbar = FormMatrix::zeros(2, 2, 2);
        let s = duhamel_series(&d, 0.5).unwrap();
        assert!(s.max_rel_diff(&k0_closed_form(&d, 0.5).unwrap(), 1e-12) < 1e-12);
    }
}
