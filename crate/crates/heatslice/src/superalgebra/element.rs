use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use super::blade::{self, Blade};
use super::form::Form;
use crate::error::{Error, Result};

/// Element of Λℝ^m ⊗ End(W): one n_W×n_W matrix per multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperElement {
    m: usize,
    n_w: usize,
    coeffs: BTreeMap<Blade, DMatrix<f64>>,
}

impl SuperElement {
    pub fn zero(m: usize, n_w: usize) -> Self {
        assert!(m <= blade::MAX_GENERATORS, "too many generators: {m}");
        SuperElement { m, n_w, coeffs: BTreeMap::new() }
    }

    pub fn identity(m: usize, n_w: usize) -> Self {
        SuperElement::from_matrix(m, DMatrix::identity(n_w, n_w))
    }

    pub fn from_matrix(m: usize, a: DMatrix<f64>) -> Self {
        let mut s = SuperElement::zero(m, a.nrows());
        s.set(0, a);
        s
    }

    pub fn monomial(m: usize, n_w: usize, b: Blade, a: f64) -> Self {
        let mut s = SuperElement::zero(m, n_w);
        s.set(b, DMatrix::identity(n_w, n_w) * a);
        s
    }

    /// form ⊗ Id_W
    pub fn from_form(f: &Form, n_w: usize) -> Self {
        let mut s = SuperElement::zero(f.dim(), n_w);
        for (b, v) in f.coeffs().iter().enumerate() {
            if *v != 0.0 {
                s.set(b as Blade, DMatrix::identity(n_w, n_w) * *v);
            }
        }
        s
    }

    /// Σ_I form_I ⊗ mats_I where both are given per blade.
    pub fn form_times(f: &Form, a: &DMatrix<f64>) -> Self {
        let mut s = SuperElement::zero(f.dim(), a.nrows());
        for (b, v) in f.coeffs().iter().enumerate() {
            if *v != 0.0 {
                s.set(b as Blade, a * *v);
            }
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn fiber(&self) -> usize {
        self.n_w
    }

    pub fn set(&mut self, b: Blade, a: DMatrix<f64>) {
        assert_eq!(a.shape(), (self.n_w, self.n_w), "coefficient shape");
        assert!(b <= blade::full(self.m), "blade outside Λℝ^{}", self.m);
        if a.iter().all(|v| *v == 0.0) {
            self.coeffs.remove(&b);
        } else {
            self.coeffs.insert(b, a);
        }
    }

    pub fn coeff(&self, b: Blade) -> DMatrix<f64> {
        self.coeffs.get(&b).cloned().unwrap_or_else(|| DMatrix::zeros(self.n_w, self.n_w))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Blade, &DMatrix<f64>)> {
        self.coeffs.iter()
    }

    pub fn scalar_part(&self) -> DMatrix<f64> {
        self.coeff(0)
    }

    pub fn degree_part(&self, k: u32) -> SuperElement {
        SuperElement {
            m: self.m,
            n_w: self.n_w,
            coeffs: self.coeffs.iter().filter(|(b, _)| blade::grade(**b) == k).map(|(b, a)| (*b, a.clone())).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().flat_map(|a| a.iter()).fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest coefficient-wise relative difference, relative to max(|a|, |b|, floor).
    pub fn max_rel_diff(&self, o: &SuperElement, floor: f64) -> f64 {
        let d = self - o;
        let mut worst: f64 = 0.0;
        for (b, a) in d.iter() {
            let sa = self.coeff(*b);
            let so = o.coeff(*b);
            for i in 0..a.len() {
                let scale = sa[i].abs().max(so[i].abs()).max(floor);
                worst = worst.max(a[i].abs() / scale);
            }
        }
        worst
    }

    pub fn scale(&self, a: f64) -> SuperElement {
        SuperElement {
            m: self.m,
            n_w: self.n_w,
            coeffs: self.coeffs.iter().map(|(b, x)| (*b, x * a)).collect(),
        }
    }

    pub fn mul(&self, o: &SuperElement) -> SuperElement {
        assert_eq!((self.m, self.n_w), (o.m, o.n_w));
        let mut out: BTreeMap<Blade, DMatrix<f64>> = BTreeMap::new();
        for (a, x) in &self.coeffs {
            for (b, y) in &o.coeffs {
                if let Some(s) = blade::wedge_sign(*a, *b) {
                    let p = x * y * s;
                    out.entry(a | b).and_modify(|acc| *acc += &p).or_insert(p);
                }
            }
        }
        out.retain(|_, v| v.iter().any(|x| *x != 0.0));
        SuperElement { m: self.m, n_w: self.n_w, coeffs: out }
    }

    /// Left multiplication of every coefficient by a matrix (acts on End(W) only).
    pub fn premul_matrix(&self, a: &DMatrix<f64>) -> SuperElement {
        SuperElement {
            m: self.m,
            n_w: self.n_w,
            coeffs: self.coeffs.iter().map(|(b, x)| (*b, a * x)).collect(),
        }
    }

    /// Berezin integral: coefficient of e¹∧…∧e^m.
    pub fn berezin(&self) -> DMatrix<f64> {
        self.coeff(blade::full(self.m))
    }

    pub fn nilpotent_exp(&self) -> SuperElement {
        let a0 = self.scalar_part();
        let mut n = self.clone();
        n.coeffs.remove(&0);
        let commutes = n.coeffs.values().all(|x| {
            let c = &a0 * x - x * &a0;
            c.amax() <= 1e-14 * (1.0 + a0.amax() * x.amax())
        });
        if commutes {
            let mut sum = SuperElement::identity(self.m, self.n_w);
            let mut term = SuperElement::identity(self.m, self.n_w);
            for k in 1..=self.m + 1 {
                term = term.mul(&n).scale(1.0 / k as f64);
                if term.is_zero() {
                    break;
                }
                sum = &sum + &term;
            }
            let e0 = if a0.iter().all(|v| *v == 0.0) { DMatrix::identity(self.n_w, self.n_w) } else { a0.exp() };
            return sum.premul_matrix(&e0);
        }
        // Scaling and squaring with a Taylor core.
        let norm = self.max_abs() * self.n_w as f64;
        let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
        let small = self.scale(0.5f64.powi(s));
        let mut sum = SuperElement::identity(self.m, self.n_w);
        let mut term = SuperElement::identity(self.m, self.n_w);
        for k in 1..60 {
            term = term.mul(&small).scale(1.0 / k as f64);
            if term.max_abs() < 1e-18 * sum.max_abs() {
                break;
            }
            sum = &sum + &term;
        }
        for _ in 0..s {
            sum = sum.mul(&sum);
        }
        sum
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }

    pub fn from_json(m: usize, v: &serde_json::Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::InvalidArgument("expected an object".into()))?;
        let mut out: Option<SuperElement> = None;
        for (k, val) in obj {
            let b = blade::parse_label(k, m).ok_or_else(|| Error::InvalidArgument(format!("bad multi-index {k:?}")))?;
            let rows: Vec<Vec<f64>> = serde_json::from_value(val.clone())?;
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::Shape(format!("coefficient {k} is not square")));
            }
            let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            let e = out.get_or_insert_with(|| SuperElement::zero(m, n));
            if e.n_w != n {
                return Err(Error::Shape("coefficients of different sizes".into()));
            }
            e.set(b, a);
        }
        out.ok_or_else(|| Error::InvalidArgument("empty element needs explicit size".into()))
    }
}

impl Serialize for SuperElement {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut entries: Vec<(Blade, &DMatrix<f64>)> = self.coeffs.iter().map(|(b, a)| (*b, a)).collect();
        entries.sort_by_key(|(b, _)| blade::indices(*b));
        let mut map = s.serialize_map(Some(entries.len()))?;
        for (b, a) in entries {
            let rows: Vec<Vec<f64>> = (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect();
            map.serialize_entry(&blade::label(b, self.m), &rows)?;
        }
        map.end()
    }
}

impl std::ops::Add<&SuperElement> for &SuperElement {
    type Output = SuperElement;
    fn add(self, o: &SuperElement) -> SuperElement {
        assert_eq!((self.m, self.n_w), (o.m, o.n_w));
        let mut out = self.clone();
        for (b, y) in &o.coeffs {
            let v = out.coeff(*b) + y;
            out.set(*b, v);
        }
        out
    }
}

impl std::ops::Sub<&SuperElement> for &SuperElement {
    type Output = SuperElement;
    fn sub(self, o: &SuperElement) -> SuperElement {
        self + &o.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_element(m: usize, n_w: usize, vals: &[f64]) -> SuperElement {
        let mut e = SuperElement::zero(m, n_w);
        let mut it = vals.iter().cycle();
        for b in 0..(1u32 << m) {
            let a = DMatrix::from_fn(n_w, n_w, |_, _| *it.next().unwrap());
            e.set(b, a);
        }
        e
    }

    #[test]
    fn berezin_examples() {
        let m = 2;
        let psi1 = SuperElement::monomial(m, 1, 0b01, 1.0);
        let psi2 = SuperElement::monomial(m, 1, 0b10, 1.0);
        assert_eq!(psi1.mul(&psi2).berezin()[(0, 0)], 1.0);
        assert_eq!(SuperElement::identity(m, 1).berezin()[(0, 0)], 0.0);
        let f = &SuperElement::monomial(m, 1, 0, 3.0) + &SuperElement::monomial(m, 1, 0b11, -2.5);
        assert_eq!(f.berezin()[(0, 0)], -2.5);
    }

    #[test]
    fn exp_of_zero_is_one() {
        let z = SuperElement::zero(3, 2);
        assert_eq!(z.nilpotent_exp(), SuperElement::identity(3, 2));
    }

    #[test]
    fn json_round_trip() {
        let e = random_element(3, 2, &[0.5, -1.0, 2.0, 0.25, 3.0]);
        let back = SuperElement::from_json(3, &e.to_json()).unwrap();
        assert_eq!(back, e);
    }

    proptest! {
        #[test]
        fn associative(v in proptest::collection::vec(-1.0f64..1.0, 7..20)) {
            let a = random_element(3, 2, &v);
            let b = random_element(3, 2, &v[1..]);
            let c = random_element(3, 2, &v[2..]);
            let l = a.mul(&b).mul(&c);
            let r = a.mul(&b.mul(&c));
            prop_assert!((&l - &r).max_abs() < 1e-12);
        }

        #[test]
        fn graded_commutative(p in 0u32..16, q in 0u32..16, x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let m = 4;
            let a = SuperElement::monomial(m, 1, p, x);
            let b = SuperElement::monomial(m, 1, q, y);
            let s = if (blade::grade(p) * blade::grade(q)) % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert!((&a.mul(&b) - &b.mul(&a).scale(s)).max_abs() < 1e-15);
        }

        #[test]
        fn nilpotent_without_scalar_part(v in proptest::collection::vec(-1.0f64..1.0, 5..12)) {
            let m = 3;
            let mut a = random_element(m, 2, &v);
            a.set(0, DMatrix::zeros(2, 2));
            let mut pow = a.clone();
            for _ in 0..m {
                pow = pow.mul(&a);
            }
            prop_assert!(pow.is_zero());
        }

        #[test]
        fn exp_inverse_for_commuting_parts(v in proptest::collection::vec(-1.0f64..1.0, 4..10), c in -1.0f64..1.0) {
            let m = 4;
            let mut f = Form::zero(m);
            for (i, b) in [0b0011u32, 0b0101, 0b1100, 0b1111].iter().enumerate() {
                f.set(*b, v[i % v.len()]);
            }
            f.set(0, c);
            let a = SuperElement::from_form(&f, 3);
            let prod = a.nilpotent_exp().mul(&a.scale(-1.0).nilpotent_exp());
            prop_assert!((&prod - &SuperElement::identity(m, 3)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn exp_with_noncommuting_scalar_part() {
        let m = 2;
        let mut a = SuperElement::zero(m, 2);
        a.set(0, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        a.set(0b11, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]));
        // d/ds exp(sA) = A exp(sA): compare against a fine Taylor sum in the full algebra
        let mut sum = SuperElement::identity(m, 2);
        let mut term = SuperElement::identity(m, 2);
        for k in 1..30 {
            term = term.mul(&a).scale(1.0 / k as f64);
            sum = &sum + &term;
        }
        assert!((&a.nilpotent_exp() - &sum).max_abs() < 1e-13);
    }
}
