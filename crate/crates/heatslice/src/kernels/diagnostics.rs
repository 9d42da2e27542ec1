use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::geometry::quadrature::gauss_legendre_interval;
use crate::geometry::{sphere, AnalyticChart, ModelManifold, QuadratureGrid};
use crate::par::Execution;

use super::laplacian::{ApproxHeatFamily, GeneralizedLaplacianSpec, PointKernel};
use super::operator::star_product_with;
use super::partition::{partition_product_with, KernelFamily, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefectNorms {
    pub sup: f64,
    pub op: f64,
}

/// Norms of K(t1)∗K(t2) − K(t1+t2) on the family's grid.
pub fn semigroup_defect<F: KernelFamily + ?Sized>(family: &F, t1: f64, t2: f64, exec: Execution) -> Result<DefectNorms> {
    let k1 = family.kernel(t1)?;
    let k2 = if t2 == t1 { k1.clone() } else { family.kernel(t2)? };
    let d = star_product_with(&k1, &k2, exec)?.difference(&family.kernel(t1 + t2)?)?;
    Ok(DefectNorms { sup: d.sup_norm(), op: d.op_norm() })
}

/// Polar rule around a point: Gauss–Legendre in the geodesic radius, uniform in angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalQuadrature {
    pub radial: usize,
    pub angular: usize,
    /// Integration radius in units of √t.
    pub width: f64,
}

impl Default for LocalQuadrature {
    fn default() -> Self {
        LocalQuadrature { radial: 64, angular: 64, width: 6.0 }
    }
}

/// Area (or length) element of geodesic polar coordinates divided by the flat one.
fn polar_jacobian(manifold: &ModelManifold, rho: f64) -> Result<f64> {
    match manifold {
        ModelManifold::FlatTorus { .. } => Ok(1.0),
        ModelManifold::RoundSphere { radius } => Ok(sphere::sinc(rho / radius)),
        ModelManifold::CustomChart(c) => match c.analytic() {
            Some(AnalyticChart::Euclidean) => Ok(1.0),
            Some(AnalyticChart::SphereNormal { radius, .. }) => Ok(sphere::sinc(rho / radius)),
            None => Err(Error::InvalidArgument("local polar quadrature needs an analytic manifold".into())),
        },
    }
}

/// Nodes and weights of a geodesic polar rule of radius `r` centred at `c`.
fn polar_rule(manifold: &ModelManifold, c: &[f64], r: f64, q: LocalQuadrature) -> Result<Vec<(Vec<f64>, f64)>> {
    let m = manifold.dim();
    let e = manifold.orthonormal_frame(c)?;
    let mut out = Vec::new();
    match m {
        1 => {
            let (s, w) = gauss_legendre_interval(2 * q.radial, -r, r);
            for (sk, wk) in s.iter().zip(&w) {
                let v = [e[(0, 0)] * sk];
                out.push((manifold.exp(c, &v)?.as_slice().to_vec(), *wk));
            }
        }
        2 => {
            let (s, w) = gauss_legendre_interval(q.radial, 0.0, r);
            let da = 2.0 * PI / q.angular as f64;
            for (sk, wk) in s.iter().zip(&w) {
                let jac = polar_jacobian(manifold, *sk)?;
                for j in 0..q.angular {
                    let a = da * (j as f64 + 0.5);
                    let dir = e.column(0) * a.cos() + e.column(1) * a.sin();
                    let v: Vec<f64> = dir.iter().map(|d| d * sk).collect();
                    out.push((manifold.exp(c, &v)?.as_slice().to_vec(), wk * sk * jac * da));
                }
            }
        }
        _ => return Err(Error::InvalidArgument(format!("local polar quadrature supports m ≤ 2, got {m}"))),
    }
    Ok(out)
}

/// max over probe pairs of |∫K(x,z;t1)K(z,y;t2)dz − K(x,y;t1+t2)|, integrating near the geodesic midpoint.
pub fn pointwise_semigroup_defect<K: PointKernel + ?Sized>(
    kernel: &K,
    probes: &[(Vec<f64>, Vec<f64>)],
    t1: f64,
    t2: f64,
    q: LocalQuadrature,
) -> Result<f64> {
    let manifold = kernel.manifold();
    let t = t1 + t2;
    let mut sup: f64 = 0.0;
    for (x, y) in probes {
        let v = manifold.log(x, y)?;
        let half: Vec<f64> = v.iter().map(|a| a / 2.0).collect();
        let c = manifold.exp(x, &half)?;
        let rule = polar_rule(manifold, c.as_slice(), q.width * t.sqrt(), q)?;
        let n = kernel.fiber();
        let mut acc = DMatrix::zeros(n, n);
        for (z, w) in &rule {
            acc += kernel.eval(x, z, t1)? * kernel.eval(z, y, t2)? * *w;
        }
        sup = sup.max((acc - kernel.eval(x, y, t)?).norm());
    }
    Ok(sup)
}

fn d1(f: [&DMatrix<f64>; 4], h: f64) -> DMatrix<f64> {
    // f at −2h, −h, +h, +2h
    (f[0] - f[3] + (f[2] - f[1]) * 8.0) / (12.0 * h)
}

fn d2(f: [&DMatrix<f64>; 5], h: f64) -> DMatrix<f64> {
    // f at −2h, −h, 0, +h, +2h
    ((f[1] + f[3]) * 16.0 - f[0] - f[4] - f[2] * 30.0) / (12.0 * h * h)
}

fn d1_sixth(f: &[DMatrix<f64>], h: f64) -> DMatrix<f64> {
    // f at −3h..−h, +h..+3h
    ((&f[5] - &f[0]) + (&f[1] - &f[4]) * 9.0 + (&f[3] - &f[2]) * 45.0) / (60.0 * h)
}

const SPACE_STEP: f64 = 0.005;
const TIME_STEP: f64 = 0.01;

/// max over probe pairs of t^{m/2}|(½Δ_x − ∂_t)K_Δ(x,y;t)|, with centred differences
/// (fourth order in space, sixth order in time).
pub fn heat_residual(spec: &GeneralizedLaplacianSpec, probes: &[(Vec<f64>, Vec<f64>)], t: f64) -> Result<f64> {
    let manifold = &spec.manifold;
    let m = manifold.dim();
    let dt = TIME_STEP * t;
    if dt <= 4.0 * f64::EPSILON * t {
        return Err(Error::InvalidArgument(format!("time step underflows at t = {t}")));
    }
    let mut sup: f64 = 0.0;
    for (x, y) in probes {
        let g = manifold.metric(x)?;
        let ginv = g.clone().try_inverse().ok_or_else(|| Error::NotPositiveDefinite(x.to_vec()))?;
        let curv = manifold.curvature_at(x)?;
        let h: Vec<f64> = (0..m).map(|i| SPACE_STEP * t.sqrt() / g[(i, i)].sqrt()).collect();
        if h.iter().any(|hi| *hi <= 1e-6 * t.sqrt()) {
            return Err(Error::InvalidArgument(format!("spatial step underflows at {x:?}")));
        }
        let shifted = |dx: &[(usize, f64)]| -> Vec<f64> {
            let mut p = x.clone();
            for (i, s) in dx {
                p[*i] += s;
            }
            p
        };
        let k_at = |p: &[f64]| spec.eval(p, y, t);
        let f0 = k_at(x)?;
        let offsets = [-2.0, -1.0, 1.0, 2.0];
        let mut grad = Vec::with_capacity(m);
        let mut hess = vec![vec![DMatrix::zeros(0, 0); m]; m];
        for i in 0..m {
            let fi: Vec<DMatrix<f64>> = offsets.iter().map(|o| k_at(&shifted(&[(i, o * h[i])]))).collect::<Result<_>>()?;
            grad.push(d1([&fi[0], &fi[1], &fi[2], &fi[3]], h[i]));
            hess[i][i] = d2([&fi[0], &fi[1], &f0, &fi[2], &fi[3]], h[i]);
        }
        for i in 0..m {
            for j in i + 1..m {
                if ginv[(i, j)].abs() < 1e-14 {
                    hess[i][j] = DMatrix::zeros(f0.nrows(), f0.ncols());
                    hess[j][i] = hess[i][j].clone();
                    continue;
                }
                let mut rows = Vec::new();
                for oi in offsets {
                    let fj: Vec<DMatrix<f64>> = offsets.iter().map(|oj| k_at(&shifted(&[(i, oi * h[i]), (j, oj * h[j])]))).collect::<Result<_>>()?;
                    rows.push(d1([&fj[0], &fj[1], &fj[2], &fj[3]], h[j]));
                }
                hess[i][j] = d1([&rows[0], &rows[1], &rows[2], &rows[3]], h[i]);
                hess[j][i] = hess[i][j].clone();
            }
        }
        let a = spec.connection.connection_form(manifold, x)?;
        // ∂_i A_j
        let mut da = vec![vec![]; m];
        for (i, dai) in da.iter_mut().enumerate() {
            let ai: Vec<Vec<DMatrix<f64>>> =
                offsets.iter().map(|o| spec.connection.connection_form(manifold, &shifted(&[(i, o * h[i])]))).collect::<Result<_>>()?;
            *dai = (0..m).map(|j| d1([&ai[0][j], &ai[1][j], &ai[2][j], &ai[3][j]], h[i])).collect();
        }
        let cov: Vec<DMatrix<f64>> = (0..m).map(|k| &grad[k] + &a[k] * &f0).collect();
        let mut lap = DMatrix::zeros(f0.nrows(), f0.ncols());
        for i in 0..m {
            for j in 0..m {
                if ginv[(i, j)] == 0.0 {
                    continue;
                }
                let mut term = &hess[i][j] + &da[i][j] * &f0 + &a[j] * &grad[i] + &a[i] * &grad[j] + &a[i] * &a[j] * &f0;
                for (k, ck) in cov.iter().enumerate() {
                    term -= ck * curv.christoffel(k, i, j);
                }
                lap += term * ginv[(i, j)];
            }
        }
        let ft: Vec<DMatrix<f64>> = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0].iter().map(|o| spec.eval(x, y, t + o * dt)).collect::<Result<_>>()?;
        let dkdt = d1_sixth(&ft, dt);
        let res = (lap - spec.potential_at(x)? * &f0) * 0.5 - dkdt;
        sup = sup.max(res.norm() * t.powf(m as f64 / 2.0));
    }
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationRow {
    pub t: f64,
    pub slices: usize,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationTable {
    pub rows: Vec<LocalizationRow>,
    /// Fit of log diff against 1/t; absent when some difference vanishes.
    pub fit: Option<LinearFit>,
}

const BALL_TOL: f64 = 1e-12;

fn check_ball(a: &GeneralizedLaplacianSpec, b: &GeneralizedLaplacianSpec, grid: &QuadratureGrid, x0: &[f64], r0: f64) -> Result<()> {
    if a.manifold != b.manifold {
        return Err(Error::BallMismatch("different manifolds".into()));
    }
    if a.fiber() != b.fiber() {
        return Err(Error::BallMismatch("different fibers".into()));
    }
    if a.cutoff != b.cutoff || a.ricci_coeff != b.ricci_coeff || a.scalar_coeff != b.scalar_coeff {
        return Err(Error::BallMismatch("different kernel parameters".into()));
    }
    for i in 0..grid.len() {
        let x = grid.node_slice(i);
        if a.manifold.distance(x0, x).unwrap_or(f64::INFINITY) >= r0 {
            continue;
        }
        if (a.potential_at(x)? - b.potential_at(x)?).amax() > BALL_TOL {
            return Err(Error::BallMismatch(format!("potentials differ at {x:?}")));
        }
        let ca = a.connection.connection_form(&a.manifold, x)?;
        let cb = b.connection.connection_form(&b.manifold, x)?;
        if ca.iter().zip(&cb).any(|(p, q)| (p - q).amax() > BALL_TOL) {
            return Err(Error::BallMismatch(format!("connections differ at {x:?}")));
        }
    }
    Ok(())
}

/// |K_A^{*P}(x0,x0;t) − K_B^{*P}(x0,x0;t)| for each t, with slices no longer than `mesh`.
pub fn localization_defect(
    a: &GeneralizedLaplacianSpec,
    b: &GeneralizedLaplacianSpec,
    grid: &Arc<QuadratureGrid>,
    x0: &[f64],
    r0: f64,
    times: &[f64],
    mesh: f64,
    exec: Execution,
) -> Result<LocalizationTable> {
    check_ball(a, b, grid, x0, r0)?;
    let fa = ApproxHeatFamily::new(a.clone(), grid.clone()).with_execution(exec);
    let fb = ApproxHeatFamily::new(b.clone(), grid.clone()).with_execution(exec);
    let node = grid.nearest(x0);
    let mut rows = Vec::new();
    for &t in times {
        let slices = (t / mesh).ceil().max(1.0) as usize;
        let p = Partition::equal(t, slices)?;
        let ka = partition_product_with(&fa, &p, exec)?;
        let kb = partition_product_with(&fb, &p, exec)?;
        rows.push(LocalizationRow { t, slices, diff: (ka.block(node, node) - kb.block(node, node)).norm() });
    }
    let fit = if rows.len() >= 2 && rows.iter().all(|r| r.diff > 0.0) {
        let x: Vec<f64> = rows.iter().map(|r| 1.0 / r.t).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.diff.ln()).collect();
        Some(linear_fit(&x, &y))
    } else {
        None
    };
    Ok(LocalizationTable { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConnectionSpec;
    use crate::kernels::Potential;

    #[test]
    fn flat_residual_vanishes() {
        let spec = GeneralizedLaplacianSpec::scalar(ModelManifold::torus(&[2.0 * PI, 2.0 * PI]));
        let probes = vec![(vec![1.0, 1.0], vec![1.0, 1.0]), (vec![1.2, 0.9], vec![1.0, 1.0])];
        let r = heat_residual(&spec, &probes, 0.05).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn constant_potential_residual_vanishes() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, -0.5]);
        let spec = GeneralizedLaplacianSpec::new(ModelManifold::torus(&[2.0 * PI, 2.0 * PI]), ConnectionSpec::trivial(2), Potential::Constant(v));
        let probes = vec![(vec![1.2, 0.9], vec![1.0, 1.0])];
        assert!(heat_residual(&spec, &probes, 0.05).unwrap() < 1e-7);
    }

    #[test]
    fn flat_pointwise_defect_vanishes() {
        let spec = GeneralizedLaplacianSpec::scalar(ModelManifold::torus(&[2.0 * PI, 2.0 * PI]));
        let probes = vec![(vec![1.0, 1.0], vec![1.3, 0.8])];
        let d = pointwise_semigroup_defect(&spec, &probes, 0.02, 0.03, LocalQuadrature::default()).unwrap();
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn identical_specs_do_not_differ() {
        let m = ModelManifold::torus(&[2.0 * PI]);
        let grid = Arc::new(m.quadrature_grid(&[32]).unwrap());
        let spec = GeneralizedLaplacianSpec::scalar(m);
        let tab = localization_defect(&spec, &spec, &grid, &[1.0], 0.5, &[0.1, 0.2], 0.05, Execution::Sequential).unwrap();
        assert!(tab.rows.iter().all(|r| r.diff == 0.0));
        assert!(tab.fit.is_none());
    }

    #[test]
    fn mismatched_ball_rejected() {
        let m = ModelManifold::torus(&[2.0 * PI]);
        let grid = Arc::new(m.quadrature_grid(&[32]).unwrap());
        let a = GeneralizedLaplacianSpec::scalar(m.clone());
        let b = GeneralizedLaplacianSpec::new(m, ConnectionSpec::trivial(1), Potential::Constant(DMatrix::from_element(1, 1, 1.0)));
        assert!(matches!(localization_defect(&a, &b, &grid, &[1.0], 0.5, &[0.1], 0.05, Execution::Sequential), Err(Error::BallMismatch(_))));
    }
}
