//! The Clifford algebra of ℝ^m and its action on Λℝ^m ⊗ W.
//!
//! Operators on Λℝ^m are 2^m×2^m matrices indexed by blade bitmask; with a twist
//! W the index of (I, w) is I·n_W + w.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::blade::{self, Blade};
use super::element::SuperElement;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CliffordElement {
    m: usize,
    coeffs: BTreeMap<Blade, f64>,
}

impl CliffordElement {
    pub fn zero(m: usize) -> Self {
        CliffordElement { m, coeffs: BTreeMap::new() }
    }

    pub fn scalar(m: usize, a: f64) -> Self {
        CliffordElement::monomial(m, 0, a)
    }

    pub fn monomial(m: usize, b: Blade, a: f64) -> Self {
        let mut e = CliffordElement::zero(m);
        if a != 0.0 {
            e.coeffs.insert(b, a);
        }
        e
    }

    /// Σ v_i e_i
    pub fn vector(v: &[f64]) -> Self {
        let m = v.len();
        let mut e = CliffordElement::zero(m);
        for (i, x) in v.iter().enumerate() {
            if *x != 0.0 {
                e.coeffs.insert(1 << i, *x);
            }
        }
        e
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Blade, &f64)> {
        self.coeffs.iter()
    }

    pub fn coeff(&self, b: Blade) -> f64 {
        self.coeffs.get(&b).copied().unwrap_or(0.0)
    }

    /// Largest grade with a nonzero coefficient (-1 for zero).
    pub fn filtration_degree(&self) -> i32 {
        self.coeffs.keys().map(|b| blade::grade(*b) as i32).max().unwrap_or(-1)
    }

    pub fn scale(&self, a: f64) -> Self {
        CliffordElement { m: self.m, coeffs: self.coeffs.iter().map(|(b, x)| (*b, x * a)).collect() }
    }

    pub fn add(&self, o: &CliffordElement) -> Self {
        let mut out = self.clone();
        for (b, y) in &o.coeffs {
            *out.coeffs.entry(*b).or_insert(0.0) += y;
        }
        out.coeffs.retain(|_, v| *v != 0.0);
        out
    }

    pub fn mul(&self, o: &CliffordElement) -> Self {
        assert_eq!(self.m, o.m);
        let mut out: BTreeMap<Blade, f64> = BTreeMap::new();
        for (a, x) in &self.coeffs {
            for (b, y) in &o.coeffs {
                *out.entry(a ^ b).or_insert(0.0) += blade::clifford_sign(*a, *b) * x * y;
            }
        }
        out.retain(|_, v| *v != 0.0);
        CliffordElement { m: self.m, coeffs: out }
    }
}

fn dim_lambda(m: usize) -> usize {
    1 << m
}

/// ε(e^i): wedge with the i-th basis covector (0-based).
pub fn exterior(m: usize, i: usize) -> DMatrix<f64> {
    let n = dim_lambda(m);
    let mut e = DMatrix::zeros(n, n);
    for b in 0..n as Blade {
        if b & (1 << i) == 0 {
            e[((b | (1 << i)) as usize, b as usize)] = blade::sign_below(b, i);
        }
    }
    e
}

/// ι(e_i): contraction with the i-th basis vector.
pub fn interior(m: usize, i: usize) -> DMatrix<f64> {
    exterior(m, i).transpose()
}

/// Grading operator (-1)^{|I|}.
pub fn grading(m: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_fn(dim_lambda(m), |b, _| {
        if blade::grade(b as Blade) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

/// c(e^i) = ε(e^i) − ι(e_i).
pub fn clifford_generator(m: usize, i: usize) -> DMatrix<f64> {
    exterior(m, i) - interior(m, i)
}

/// Right Clifford action (ε + ι)·N, which supercommutes to an honest commutant of every c(e^i).
pub fn commutant_generator(m: usize, i: usize) -> DMatrix<f64> {
    (exterior(m, i) + interior(m, i)) * grading(m)
}

/// c_Λ(v*) for a covector given by its components.
pub fn clifford_action(v: &[f64]) -> DMatrix<f64> {
    let m = v.len();
    let mut c = DMatrix::zeros(dim_lambda(m), dim_lambda(m));
    for (i, x) in v.iter().enumerate() {
        if *x != 0.0 {
            c += clifford_generator(m, i) * *x;
        }
    }
    c
}

/// c(e_I) = c(e_{i1})⋯c(e_{ik}).
pub fn clifford_blade(m: usize, b: Blade) -> DMatrix<f64> {
    let mut c = DMatrix::identity(dim_lambda(m), dim_lambda(m));
    for i in blade::indices(b) {
        c *= clifford_generator(m, i - 1);
    }
    c
}

/// Extends c_Λ multiplicatively to the whole Clifford algebra.
pub fn clifford_matrix(a: &CliffordElement) -> DMatrix<f64> {
    let n = dim_lambda(a.dim());
    let mut c = DMatrix::zeros(n, n);
    for (b, x) in a.iter() {
        c += clifford_blade(a.dim(), *b) * *x;
    }
    c
}

/// M ⊗ Id_W
pub fn with_twist(a: &DMatrix<f64>, n_w: usize) -> DMatrix<f64> {
    a.kronecker(&DMatrix::<f64>::identity(n_w, n_w))
}

/// c acting on 2-forms: Σ_{i<j} F_ij c(e^i)c(e^j), where F_ij are blocks commuting with c.
pub fn two_form_action(c: &[DMatrix<f64>], f: &[Vec<DMatrix<f64>>]) -> DMatrix<f64> {
    let n = c[0].nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..c.len() {
        for j in (i + 1)..c.len() {
            out += &f[i][j] * &c[i] * &c[j];
        }
    }
    out
}

/// Symbol map: c_Λ(A) applied to 1.
pub fn rho(a: &CliffordElement) -> SuperElement {
    let m = a.dim();
    let col = clifford_matrix(a).column(0).clone_owned();
    let mut s = SuperElement::zero(m, 1);
    for (b, v) in col.iter().enumerate() {
        if *v != 0.0 {
            s.set(b as Blade, DMatrix::from_element(1, 1, *v));
        }
    }
    s
}

/// Degree-2k part of ρ(A).
pub fn rho_k(a: &CliffordElement, k: u32) -> SuperElement {
    rho(a).degree_part(2 * k)
}

/// ψ_r^{-1} M ψ_r with ψ_r = r^{deg} on the Λ factor.
pub fn grading_conjugate(a: &DMatrix<f64>, m: usize, n_w: usize, r: f64) -> Result<DMatrix<f64>> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("grading scale must be positive, got {r}")));
    }
    check_square(a, dim_lambda(m) * n_w)?;
    Ok(DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        let gi = blade::grade((i / n_w) as Blade) as i32;
        let gj = blade::grade((j / n_w) as Blade) as i32;
        a[(i, j)] * r.powi(gj - gi)
    }))
}

/// Σ_I (−1)^{|I|} M_{II} as an n_W×n_W matrix.
pub fn supertrace(a: &DMatrix<f64>, m: usize, n_w: usize) -> Result<DMatrix<f64>> {
    check_square(a, dim_lambda(m) * n_w)?;
    let mut s = DMatrix::zeros(n_w, n_w);
    for b in 0..dim_lambda(m) {
        let sign = if blade::grade(b as Blade) % 2 == 0 { 1.0 } else { -1.0 };
        s += a.view((b * n_w, b * n_w), (n_w, n_w)) * sign;
    }
    Ok(s)
}

/// Scalar supertrace Str_Λ ⊗ Tr_W.
pub fn supertrace_scalar(a: &DMatrix<f64>, m: usize, n_w: usize) -> Result<f64> {
    supertrace(a, m, n_w).map(|s| s.trace())
}

fn check_square(a: &DMatrix<f64>, n: usize) -> Result<()> {
    if a.shape() != (n, n) {
        return Err(Error::Shape(format!("expected {n}×{n}, got {:?}", a.shape())));
    }
    Ok(())
}

fn minor_det(q: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    if k == 0 {
        return 1.0;
    }
    DMatrix::from_fn(k, k, |i, j| q[(rows[i] - 1, cols[j] - 1)]).determinant()
}

/// Λ(Q): the induced action of Q on Λℝ^m, entries det Q[I, J].
pub fn exterior_power(q: &DMatrix<f64>) -> DMatrix<f64> {
    let m = q.nrows();
    let n = dim_lambda(m);
    let idx: Vec<Vec<usize>> = (0..n as Blade).map(blade::indices).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if idx[i].len() != idx[j].len() {
            0.0
        } else {
            minor_det(q, &idx[i], &idx[j])
        }
    })
}

/// Derivation extension of ω ∈ gl(m) to Λℝ^m: Σ ω_ab ε(e^a)ι(e_b).
pub fn derivation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let m = w.nrows();
    let n = dim_lambda(m);
    let mut d = DMatrix::zeros(n, n);
    for a in 0..m {
        for b in 0..m {
            if w[(a, b)] != 0.0 {
                d += exterior(m, a) * interior(m, b) * w[(a, b)];
            }
        }
    }
    d
}

/// Projection onto the commutant of the Clifford action: 2^{-m} Σ_J c(e_J) X c(e_J)^{-1}.
pub fn commutant_projection(x: &DMatrix<f64>, m: usize, n_w: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(x.nrows(), x.ncols());
    for b in 0..dim_lambda(m) as Blade {
        let c = with_twist(&clifford_blade(m, b), n_w);
        let sign = blade::clifford_sign(b, b);
        acc += &c * x * &c * sign;
    }
    acc / dim_lambda(m) as f64
}

/// Writes M = Σ_I c(e_I) B_I with B_I in the commutant; returns σ(M) = Σ e^I ⊗ B_I.
pub fn clifford_symbol(x: &DMatrix<f64>, m: usize, n_w: usize) -> Result<SuperElement> {
    if m % 2 == 1 {
        return Err(Error::OddDimension(m));
    }
    let n = dim_lambda(m) * n_w;
    check_square(x, n)?;
    let mut s = SuperElement::zero(m, n);
    for b in 0..dim_lambda(m) as Blade {
        let c = with_twist(&clifford_blade(m, b), n_w);
        // c(e_I)^{-1} = sign · c(e_I) with c(e_I)^2 = sign
        let inv = &c * blade::clifford_sign(b, b);
        s.set(b, commutant_projection(&(inv * x), m, n_w));
    }
    Ok(s)
}

/// Inverse of `clifford_symbol`.
pub fn from_clifford_symbol(s: &SuperElement, n_w: usize) -> DMatrix<f64> {
    let m = s.dim();
    let mut out = DMatrix::zeros(s.fiber(), s.fiber());
    for (b, coeff) in s.iter() {
        out += with_twist(&clifford_blade(m, *b), n_w) * coeff;
    }
    out
}

/// Largest commutator norm ‖[X, c(e^p)]‖ over the generators.
pub fn commutant_residual(x: &DMatrix<f64>, m: usize, n_w: usize) -> f64 {
    (0..m)
        .map(|p| {
            let c = with_twist(&clifford_generator(m, p), n_w);
            (x * &c - &c * x).amax()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_examples() {
        let c1 = clifford_generator(2, 0);
        let one = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]);
        let e1 = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(&c1 * &one, e1);
        assert_eq!(&c1 * &e1, -one);
        assert_eq!(&c1 * &c1, -DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn clifford_relations_all_pairs() {
        for m in 1..=5 {
            let n = 1 << m;
            for i in 0..m {
                for j in 0..m {
                    let ci = clifford_generator(m, i);
                    let cj = clifford_generator(m, j);
                    let expect = if i == j { -2.0 } else { 0.0 };
                    let ac = &ci * &cj + &cj * &ci;
                    assert!((ac - DMatrix::identity(n, n) * expect).amax() == 0.0);
                }
            }
        }
    }

    #[test]
    fn commutant_generators_commute() {
        let m = 4;
        for p in 0..m {
            for q in 0..m {
                let c = clifford_generator(m, p);
                let r = commutant_generator(m, q);
                assert!((&c * &r - &r * &c).amax() == 0.0);
            }
        }
    }

    #[test]
    fn clifford_matrix_is_a_representation() {
        let m = 3;
        let a = CliffordElement::vector(&[0.5, -1.0, 2.0]).add(&CliffordElement::monomial(m, 0b110, 0.7));
        let b = CliffordElement::monomial(m, 0b011, 1.3).add(&CliffordElement::scalar(m, -0.2));
        let lhs = clifford_matrix(&a.mul(&b));
        let rhs = clifford_matrix(&a) * clifford_matrix(&b);
        assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn rho_examples() {
        let m = 2;
        let e12 = CliffordElement::monomial(m, 0b11, 1.0);
        assert_eq!(rho(&e12), SuperElement::monomial(m, 1, 0b11, 1.0));
        let e1 = CliffordElement::monomial(m, 0b01, 1.0);
        assert!(rho_k(&e1, 1).is_zero());
        assert_eq!(rho(&CliffordElement::scalar(m, 1.0)), SuperElement::identity(m, 1));
    }

    #[test]
    fn supertrace_examples() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(supertrace_scalar(&id, 2, 1).unwrap(), 0.0);
        let mut top = DMatrix::<f64>::zeros(4, 4);
        top[(3, 3)] = 1.0;
        assert_eq!(supertrace_scalar(&top, 2, 1).unwrap(), 1.0);
    }

    #[test]
    fn explicit_c1c2_oracle() {
        // c(e1)c(e2) on the basis (1, e1, e2, e12): 1 ↦ e12, e1 ↦ e2, e2 ↦ -e1, e12 ↦ -1
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        );
        let c = clifford_generator(2, 0) * clifford_generator(2, 1);
        assert_eq!(c, expect);
        assert_eq!(supertrace_scalar(&c, 2, 1).unwrap(), 0.0);
    }

    #[test]
    fn grading_conjugate_scales_by_degree_shift() {
        let m = 2;
        let c = clifford_blade(m, 0b11);
        assert_eq!(grading_conjugate(&c, m, 1, 1.0).unwrap(), c);
        let mut raise = DMatrix::zeros(4, 4);
        raise[(3, 0)] = 1.0;
        let g = grading_conjugate(&raise, m, 1, 0.3).unwrap();
        assert!((g[(3, 0)] * 0.09 - 1.0).abs() < 1e-14);
        assert!(grading_conjugate(&c, m, 1, 0.0).is_err());
    }

    #[test]
    fn exterior_power_is_multiplicative() {
        let q = DMatrix::from_row_slice(3, 3, &[0.3, -1.0, 0.2, 0.7, 0.1, 0.5, -0.4, 0.9, 1.1]);
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, -0.3, 0.8, 0.4, 0.5, 0.0, 1.2]);
        let lhs = exterior_power(&(&q * &p));
        let rhs = exterior_power(&q) * exterior_power(&p);
        assert!((lhs - rhs).amax() < 1e-13);
        let c = clifford_action(&[0.4, -0.2, 0.9]);
        // orthogonal Q intertwines c_Λ: Λ(Q) c(v) Λ(Q)^T = c(Qv)
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.5, 1.1);
        let qm = DMatrix::from_fn(3, 3, |i, j| rot[(i, j)]);
        let lq = exterior_power(&qm);
        let v = nalgebra::DVector::from_vec(vec![0.4, -0.2, 0.9]);
        let qv = &qm * v;
        let lhs = &lq * c * lq.transpose();
        let rhs = clifford_action(qv.as_slice());
        assert!((lhs - rhs).amax() < 1e-13);
    }

    #[test]
    fn symbol_decomposition_round_trips() {
        let m = 2;
        let n_w = 2;
        let n = 8;
        let x = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
        let s = clifford_symbol(&x, m, n_w).unwrap();
        let back = from_clifford_symbol(&s, n_w);
        assert!((back - &x).amax() < 1e-13);
        for (_, b) in s.iter() {
            assert!(commutant_residual(b, m, n_w) < 1e-13);
        }
    }
}
