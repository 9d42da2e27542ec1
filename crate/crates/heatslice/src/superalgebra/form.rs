//! Scalar-valued elements of Λℝ^m and matrices over the even (commutative) subalgebra.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use super::blade::{self, Blade};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Form {
    m: usize,
    c: Vec<f64>,
}

impl Form {
    pub fn zero(m: usize) -> Self {
        assert!(m <= blade::MAX_GENERATORS, "too many generators: {m}");
        Form { m, c: vec![0.0; 1 << m] }
    }

    pub fn scalar(m: usize, a: f64) -> Self {
        let mut f = Form::zero(m);
        f.c[0] = a;
        f
    }

    pub fn one(m: usize) -> Self {
        Form::scalar(m, 1.0)
    }

    pub fn basis(m: usize, b: Blade, a: f64) -> Self {
        let mut f = Form::zero(m);
        f.c[b as usize] = a;
        f
    }

    /// e^i ∧ e^j with 0-based indices, as a coefficient times the sorted blade.
    pub fn two_form(m: usize, i: usize, j: usize, a: f64) -> Self {
        let mut f = Form::zero(m);
        if i != j {
            let s = blade::wedge_sign(1 << i, 1 << j).unwrap();
            f.c[((1 << i) | (1 << j)) as usize] = s * a;
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn coeff(&self, b: Blade) -> f64 {
        self.c[b as usize]
    }

    pub fn set(&mut self, b: Blade, a: f64) {
        self.c[b as usize] = a;
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn scalar_part(&self) -> f64 {
        self.c[0]
    }

    pub fn top(&self) -> f64 {
        self.c[blade::full(self.m) as usize]
    }

    pub fn degree_part(&self, k: u32) -> Form {
        let mut f = Form::zero(self.m);
        for (b, v) in self.c.iter().enumerate() {
            if blade::grade(b as Blade) == k {
                f.c[b] = *v;
            }
        }
        f
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|v| *v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn scale(&self, a: f64) -> Form {
        Form { m: self.m, c: self.c.iter().map(|v| v * a).collect() }
    }

    pub fn wedge(&self, o: &Form) -> Form {
        assert_eq!(self.m, o.m);
        let mut out = Form::zero(self.m);
        for (a, &x) in self.c.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (b, &y) in o.c.iter().enumerate() {
                if y == 0.0 {
                    continue;
                }
                if let Some(s) = blade::wedge_sign(a as Blade, b as Blade) {
                    out.c[a | b] += s * x * y;
                }
            }
        }
        out
    }

    fn nilpotent_part(&self) -> Form {
        let mut n = self.clone();
        n.c[0] = 0.0;
        n
    }

    /// Σ_k coeffs[k]·u^k for the nilpotent part u, stopping once u^k vanishes.
    fn series(&self, u: &Form, mut coeff: impl FnMut(usize) -> f64) -> Form {
        let mut out = Form::scalar(self.m, coeff(0));
        let mut pow = Form::one(self.m);
        for k in 1..=self.m + 1 {
            pow = pow.wedge(u);
            if pow.is_zero() {
                break;
            }
            out += &pow.scale(coeff(k));
        }
        out
    }

    pub fn exp(&self) -> Form {
        let n = self.nilpotent_part();
        let mut fact = 1.0;
        let s = self.series(&n, |k| {
            if k > 0 {
                fact *= k as f64;
            }
            1.0 / fact
        });
        s.scale(self.c[0].exp())
    }

    /// a^p for an element with positive scalar part (binomial series).
    pub fn powf(&self, p: f64) -> Result<Form> {
        let a0 = self.c[0];
        if a0 <= 0.0 {
            return Err(Error::InvalidArgument(format!("powf needs positive scalar part, got {a0}")));
        }
        let u = self.nilpotent_part().scale(1.0 / a0);
        let mut binom = 1.0;
        let s = self.series(&u, |k| {
            if k > 0 {
                binom *= (p - (k as f64 - 1.0)) / k as f64;
            }
            binom
        });
        Ok(s.scale(a0.powf(p)))
    }

    pub fn inverse(&self) -> Result<Form> {
        let a0 = self.c[0];
        if a0 == 0.0 {
            return Err(Error::InvalidArgument("inverse of a nilpotent element".into()));
        }
        let u = self.nilpotent_part().scale(1.0 / a0);
        let s = self.series(&u, |k| if k % 2 == 0 { 1.0 } else { -1.0 });
        Ok(s.scale(1.0 / a0))
    }

    pub fn ln(&self) -> Result<Form> {
        let a0 = self.c[0];
        if a0 <= 0.0 {
            return Err(Error::InvalidArgument(format!("log needs positive scalar part, got {a0}")));
        }
        let u = self.nilpotent_part().scale(1.0 / a0);
        let s = self.series(&u, |k| match k {
            0 => a0.ln(),
            _ if k % 2 == 1 => 1.0 / k as f64,
            _ => -1.0 / k as f64,
        });
        Ok(s)
    }
}

impl Add<&Form> for &Form {
    type Output = Form;
    fn add(self, o: &Form) -> Form {
        let mut out = self.clone();
        out += o;
        out
    }
}

impl AddAssign<&Form> for Form {
    fn add_assign(&mut self, o: &Form) {
        assert_eq!(self.m, o.m);
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            *a += b;
        }
    }
}

impl Sub<&Form> for &Form {
    type Output = Form;
    fn sub(self, o: &Form) -> Form {
        self + &o.scale(-1.0)
    }
}

impl Neg for &Form {
    type Output = Form;
    fn neg(self) -> Form {
        self.scale(-1.0)
    }
}

impl Mul<&Form> for &Form {
    type Output = Form;
    fn mul(self, o: &Form) -> Form {
        self.wedge(o)
    }
}

/// Dense matrix whose entries are forms; arithmetic assumes the entries commute (even forms).
#[derive(Debug, Clone, PartialEq)]
pub struct FormMatrix {
    rows: usize,
    cols: usize,
    m: usize,
    data: Vec<Form>,
}

impl FormMatrix {
    pub fn zeros(rows: usize, cols: usize, m: usize) -> Self {
        FormMatrix { rows, cols, m, data: vec![Form::zero(m); rows * cols] }
    }

    pub fn identity(n: usize, m: usize) -> Self {
        let mut a = FormMatrix::zeros(n, n, m);
        for i in 0..n {
            a[(i, i)] = Form::one(m);
        }
        a
    }

    pub fn from_scalars(mat: &nalgebra::DMatrix<f64>, m: usize) -> Self {
        let mut a = FormMatrix::zeros(mat.nrows(), mat.ncols(), m);
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                a[(i, j)] = Form::scalar(m, mat[(i, j)]);
            }
        }
        a
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn scalar_part(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].scalar_part())
    }

    pub fn transpose(&self) -> FormMatrix {
        let mut t = FormMatrix::zeros(self.cols, self.rows, self.m);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn scale(&self, a: f64) -> FormMatrix {
        FormMatrix { data: self.data.iter().map(|f| f.scale(a)).collect(), ..self.clone() }
    }

    pub fn scale_form(&self, a: &Form) -> FormMatrix {
        FormMatrix { data: self.data.iter().map(|f| f.wedge(a)).collect(), ..self.clone() }
    }

    pub fn add(&self, o: &FormMatrix) -> FormMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        FormMatrix { data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(), ..self.clone() }
    }

    pub fn sub(&self, o: &FormMatrix) -> FormMatrix {
        self.add(&o.scale(-1.0))
    }

    pub fn matmul(&self, o: &FormMatrix) -> FormMatrix {
        assert_eq!(self.cols, o.rows);
        let mut out = FormMatrix::zeros(self.rows, o.cols, self.m);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let p = a.wedge(&o[(k, j)]);
                    out[(i, j)] += &p;
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Form {
        let mut t = Form::zero(self.m);
        for i in 0..self.rows.min(self.cols) {
            t += &self[(i, i)];
        }
        t
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Form::is_zero)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, f| a.max(f.max_abs()))
    }

    /// Gauss–Jordan elimination pivoting on the scalar parts.
    fn eliminate(&self) -> Result<(Form, FormMatrix)> {
        let n = self.rows;
        if n != self.cols {
            return Err(Error::Shape("square matrix required".into()));
        }
        let mut a = self.clone();
        let mut inv = FormMatrix::identity(n, self.m);
        let mut det = Form::one(self.m);
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[(i, col)].scalar_part().abs().total_cmp(&a[(j, col)].scalar_part().abs()))
                .unwrap();
            if a[(piv, col)].scalar_part().abs() < 1e-300 {
                return Err(Error::InvalidArgument("singular scalar part".into()));
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(piv * n + j, col * n + j);
                    inv.data.swap(piv * n + j, col * n + j);
                }
                det = det.scale(-1.0);
            }
            let p = a[(col, col)].clone();
            det = det.wedge(&p);
            let pinv = p.inverse()?;
            for j in 0..n {
                a[(col, j)] = a[(col, j)].wedge(&pinv);
                inv[(col, j)] = inv[(col, j)].wedge(&pinv);
            }
            for i in 0..n {
                if i == col || a[(i, col)].is_zero() {
                    continue;
                }
                let f = a[(i, col)].clone();
                for j in 0..n {
                    let da = f.wedge(&a[(col, j)]);
                    let di = f.wedge(&inv[(col, j)]);
                    a[(i, j)] = &a[(i, j)] - &da;
                    inv[(i, j)] = &inv[(i, j)] - &di;
                }
            }
        }
        Ok((det, inv))
    }

    pub fn inverse(&self) -> Result<FormMatrix> {
        self.eliminate().map(|(_, inv)| inv)
    }

    pub fn det(&self) -> Result<Form> {
        self.eliminate().map(|(d, _)| d)
    }

    pub fn antisymmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                d = d.max((&self[(i, j)] + &self[(j, i)]).max_abs());
            }
        }
        d
    }
}

impl std::ops::Index<(usize, usize)> for FormMatrix {
    type Output = Form;
    fn index(&self, (i, j): (usize, usize)) -> &Form {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for FormMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Form {
        &mut self.data[i * self.cols + j]
    }
}

const BERNOULLI_EVEN: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Coefficient of x^{2k} in log(sinh x / x).
fn log_sinhc_coeff(k: usize) -> f64 {
    let b = BERNOULLI_EVEN[k - 1];
    let mut fact = 1.0;
    for i in 1..=2 * k {
        fact *= i as f64;
    }
    4f64.powi(k as i32) * b / (2.0 * k as f64 * fact)
}

/// det^{1/2}(X / sinh X) for an antisymmetric matrix of 2-forms, via exp(½ tr log).
pub fn asqrt_det(x: &FormMatrix) -> Result<Form> {
    let defect = x.antisymmetry_defect();
    if defect > 1e-12 * (1.0 + x.max_abs()) {
        return Err(Error::NotAntisymmetric(defect));
    }
    let m = x.dim();
    let x2 = x.matmul(x);
    let mut pow = x2.clone();
    let mut log_sum = Form::zero(m);
    for k in 1..=BERNOULLI_EVEN.len() {
        if pow.is_zero() {
            break;
        }
        log_sum += &pow.trace().scale(log_sinhc_coeff(k));
        pow = pow.matmul(&x2);
    }
    Ok(log_sum.scale(-0.5).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_functions_are_inverse_pairs() {
        let m = 4;
        let mut a = Form::scalar(m, 2.0);
        a.set(0b0011, 0.3);
        a.set(0b1100, -0.7);
        a.set(0b1111, 0.2);
        let inv = a.inverse().unwrap();
        let prod = a.wedge(&inv);
        assert!((&prod - &Form::one(m)).max_abs() < 1e-14);
        let r = a.powf(0.5).unwrap();
        assert!((&r.wedge(&r) - &a).max_abs() < 1e-14);
        let back = a.ln().unwrap().exp();
        assert!((&back - &a).max_abs() < 1e-14);
    }

    #[test]
    fn log_sinhc_series_coefficients() {
        assert!((log_sinhc_coeff(1) - 1.0 / 6.0).abs() < 1e-16);
        assert!((log_sinhc_coeff(2) + 1.0 / 180.0).abs() < 1e-16);
        assert!((log_sinhc_coeff(3) - 1.0 / 2835.0).abs() < 1e-16);
    }

    #[test]
    fn matrix_inverse_and_det() {
        let m = 4;
        let mut a = FormMatrix::identity(2, m);
        a[(0, 0)] = Form::scalar(m, 3.0);
        a[(0, 1)] = Form::two_form(m, 0, 1, 0.5);
        a[(1, 0)] = Form::two_form(m, 2, 3, -0.25);
        a[(1, 1)].set(0b1111, 0.1);
        let inv = a.inverse().unwrap();
        let id = a.matmul(&inv);
        assert!(id.sub(&FormMatrix::identity(2, m)).max_abs() < 1e-14);
        let det = a.det().unwrap();
        let direct = &a[(0, 0)].wedge(&a[(1, 1)]) - &a[(0, 1)].wedge(&a[(1, 0)]);
        assert!((&det - &direct).max_abs() < 1e-14);
    }
}
