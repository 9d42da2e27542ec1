use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::quadrature::gauss_legendre_interval;
use crate::superalgebra::{Form, FormMatrix, SuperElement};

use super::FlatModelData;

/// Symmetric form-valued matrix Q with vᵀQv equal to the j-th insertion's quadratic part.
fn insertion(data: &FlatModelData, k: usize, j: usize, tau: f64) -> FormMatrix {
    let m = data.m;
    let r = &data.rbar;
    let mut q = FormMatrix::zeros(k * m, k * m, m);
    // |R̄y_j|²/32
    let rtr = r.transpose().matmul(r);
    for a in 0..m {
        for b in 0..m {
            q[(j * m + a, j * m + b)] = rtr[(a, b)].scale(1.0 / 32.0);
        }
    }
    // ⟨R̄y_j, y_{j+1}⟩/(4τ_j)
    if j + 1 < k {
        for a in 0..m {
            for l in 0..m {
                let c = r[(l, a)].scale(1.0 / (8.0 * tau));
                q[(j * m + a, (j + 1) * m + l)] = &q[(j * m + a, (j + 1) * m + l)] + &c;
                q[((j + 1) * m + l, j * m + a)] = &q[((j + 1) * m + l, j * m + a)] + &c;
            }
        }
    }
    q
}

/// Joint cumulant of the quadratic forms vᵀQ_iv: 2^{n−1}Σ over cyclic orders of tr(Π Q_iΣ).
fn cumulant(qs: &[&FormMatrix]) -> Form {
    let n = qs.len();
    let m = qs[0].dim();
    let mut total = Form::zero(m);
    let rest: Vec<usize> = (1..n).collect();
    let mut perms = Vec::new();
    permutations(&rest, &mut Vec::new(), &mut perms);
    for p in perms {
        let mut prod = qs[0].clone();
        for &i in &p {
            prod = prod.matmul(qs[i]);
        }
        total += &prod.trace();
    }
    total.scale(2f64.powi(n as i32 - 1))
}

fn permutations(items: &[usize], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if items.is_empty() {
        out.push(cur.clone());
        return;
    }
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        cur.push(x);
        permutations(&rest, cur, out);
        cur.pop();
    }
}

/// Every set partition of `items`.
fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let first = items[0];
    let mut out = Vec::new();
    for p in set_partitions(&items[1..]) {
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i].insert(0, first);
            out.push(q);
        }
        let mut q = p.clone();
        q.push(vec![first]);
        out.push(q);
    }
    out
}

/// E[Π_{j∈S} vᵀQ_jv] for v ~ N(0, Σ), by Wick's theorem.
fn moment(qs: &[FormMatrix], subset: &[usize]) -> Form {
    let m = qs[0].dim();
    let mut total = Form::zero(m);
    for part in set_partitions(subset) {
        let mut term = Form::one(m);
        for block in part {
            let mats: Vec<&FormMatrix> = block.iter().map(|&j| &qs[j]).collect();
            term = term.wedge(&cumulant(&mats));
        }
        total += &term;
    }
    total
}

/// Order-k term integrand at interior times s_1 < … < s_k: E_bridge[Π_j β_j] with β_j = q_j − F̄/2.
fn term_integrand(data: &FlatModelData, times: &[f64], t: f64, f_powers: &[SuperElement]) -> SuperElement {
    let m = data.m;
    let k = times.len();
    let mut sigma = FormMatrix::zeros(k * m, k * m, m);
    for a in 0..k {
        for b in 0..k {
            let (lo, hi) = if times[a] <= times[b] { (times[a], times[b]) } else { (times[b], times[a]) };
            let c = lo * (t - hi) / t;
            for i in 0..m {
                sigma[(a * m + i, b * m + i)] = Form::scalar(m, c);
            }
        }
    }
    let qs: Vec<FormMatrix> = (0..k)
        .map(|j| {
            let next = if j + 1 < k { times[j + 1] } else { t };
            insertion(data, k, j, next - times[j]).matmul(&sigma)
        })
        .collect();
    let mut out = SuperElement::zero(m, data.n_w);
    for mask in 0usize..(1 << k) {
        let subset: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).collect();
        let e = if subset.is_empty() { Form::one(m) } else { moment(&qs, &subset) };
        if e.is_zero() {
            continue;
        }
        let f = &f_powers[k - subset.len()];
        out = &out + &SuperElement::from_form(&e, data.n_w).mul(f);
    }
    out
}

fn simplex_integral(data: &FlatModelData, k: usize, t: f64, nodes: usize, f_powers: &[SuperElement]) -> SuperElement {
    let (u, w) = gauss_legendre_interval(nodes, 0.0, 1.0);
    let mut total = SuperElement::zero(data.m, data.n_w);
    let mut idx = vec![0usize; k];
    loop {
        let mut times = Vec::with_capacity(k);
        let mut jac = 1.0;
        let mut prev = 0.0;
        for &i in &idx {
            let s = prev + (t - prev) * u[i];
            jac *= (t - prev) * w[i];
            times.push(s);
            prev = s;
        }
        total = &total + &term_integrand(data, &times, t, f_powers).scale(jac);
        let mut d = 0;
        loop {
            if d == k {
                return total;
            }
            idx[d] += 1;
            if idx[d] < nodes {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Relative size above which the Gauss–Legendre doubling check fails.
const DOUBLING_TOL: f64 = 1e-9;

/// Σ_{k ≤ k_max} of the iterated H_flat ∗ ½(Δ − Δ_flat) ∗ … ∗ H_flat terms at (0,0), with time
/// integrals over the simplex by `nodes`-point Gauss–Legendre per variable and a doubling check.
pub fn duhamel_series_with(data: &FlatModelData, t: f64, k_max: usize, nodes: usize) -> Result<SuperElement> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    let m = data.m;
    let half_f = data.fbar.scale(-0.5);
    let mut f_powers = vec![SuperElement::identity(m, data.n_w)];
    for i in 1..=k_max {
        f_powers.push(f_powers[i - 1].mul(&half_f));
    }
    let mut total = SuperElement::identity(m, data.n_w);
    let mut finer = SuperElement::identity(m, data.n_w);
    for k in 1..=k_max {
        total = &total + &simplex_integral(data, k, t, nodes, &f_powers);
        finer = &finer + &simplex_integral(data, k, t, 2 * nodes, &f_powers);
    }
    let scale = finer.max_abs().max(1.0);
    let gap = (&finer - &total).max_abs();
    if gap > DOUBLING_TOL * scale {
        return Err(Error::TimeQuadrature(format!("{nodes}- and {}-node rules differ by {gap:e}", 2 * nodes)));
    }
    Ok(finer.scale((2.0 * PI * t).powf(-(m as f64) / 2.0)))
}

pub fn duhamel_series(data: &FlatModelData, t: f64) -> Result<SuperElement> {
    duhamel_series_with(data, t, data.m / 2, 16)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partitions_are_bell_numbers() {
        assert_eq!(set_partitions(&[0, 1, 2]).len(), 5);
        assert_eq!(set_partitions(&[0, 1, 2, 3]).len(), 15);
    }

    #[test]
    fn scalar_wick_moments() {
        // v ~ N(0, s²) in one dimension: E[v²] = s², E[v⁴] = 3s⁴
        let s2 = 0.7;
        let q = FormMatrix::from_scalars(&nalgebra::DMatrix::from_element(1, 1, s2), 0);
        let qs = vec![q.clone(), q];
        assert!((moment(&qs, &[0]).scalar_part() - s2).abs() < 1e-15);
        assert!((moment(&qs, &[0, 1]).scalar_part() - 3.0 * s2 * s2).abs() < 1e-15);
    }
}
