//! Model manifolds: flat tori, round spheres and user charts on ℝ^m.

pub mod chart;
pub mod connection;
pub mod curvature;
pub mod quadrature;
pub mod sphere;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};

pub use chart::{AnalyticChart, ChartDomain, CustomChart, MetricFn};
pub use connection::{frame_connection_form, parallel_transport, ConnectionForm, ConnectionKind, ConnectionSpec};
pub use curvature::{CurvatureData, Riemann};
pub use quadrature::QuadratureGrid;

use crate::error::{Error, Result};

const POLE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelManifold {
    FlatTorus { periods: Vec<f64> },
    RoundSphere { radius: f64 },
    CustomChart(CustomChart),
}

fn wrap_half(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

impl ModelManifold {
    pub fn torus(periods: &[f64]) -> Self {
        ModelManifold::FlatTorus { periods: periods.to_vec() }
    }

    pub fn sphere(radius: f64) -> Self {
        ModelManifold::RoundSphere { radius }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelManifold::FlatTorus { periods } => periods.len(),
            ModelManifold::RoundSphere { .. } => 2,
            ModelManifold::CustomChart(c) => c.dim(),
        }
    }

    pub fn is_analytic(&self) -> bool {
        match self {
            ModelManifold::CustomChart(c) => c.analytic().is_some(),
            _ => true,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ModelManifold::FlatTorus { periods } => format!("flat torus {periods:?}"),
            ModelManifold::RoundSphere { radius } => format!("round sphere a={radius}"),
            ModelManifold::CustomChart(c) => format!("chart m={} {:?}", c.dim(), c.analytic()),
        }
    }

    /// Below this distance minimal geodesics are unique.
    pub fn injectivity_radius(&self) -> f64 {
        match self {
            ModelManifold::FlatTorus { periods } => periods.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0,
            ModelManifold::RoundSphere { radius } => PI * radius,
            ModelManifold::CustomChart(c) => match c.domain() {
                ChartDomain::Ball { radius } => *radius,
                ChartDomain::Box { lower, upper } => lower.iter().zip(upper).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min),
            },
        }
    }

    /// Default kernel cutoff D.
    pub fn default_cutoff(&self) -> f64 {
        match self {
            ModelManifold::FlatTorus { .. } => self.injectivity_radius(),
            ModelManifold::RoundSphere { radius } => PI * radius / 2.0,
            ModelManifold::CustomChart(_) => self.injectivity_radius() / 2.0,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("point of dimension {} on a {}-manifold", x.len(), self.dim())));
        }
        match self {
            ModelManifold::RoundSphere { .. } => {
                if x[0].sin() < POLE_GUARD || !(0.0..=PI).contains(&x[0]) {
                    Err(Error::SingularPoint(x.to_vec()))
                } else {
                    Ok(())
                }
            }
            ModelManifold::CustomChart(c) => c.check(x),
            ModelManifold::FlatTorus { .. } => Ok(()),
        }
    }

    pub fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x)?;
        match self {
            ModelManifold::FlatTorus { periods } => Ok(DMatrix::identity(periods.len(), periods.len())),
            ModelManifold::RoundSphere { radius } => {
                let a2 = radius * radius;
                Ok(DMatrix::from_row_slice(2, 2, &[a2, 0.0, 0.0, a2 * x[0].sin().powi(2)]))
            }
            ModelManifold::CustomChart(c) => c.metric(x),
        }
    }

    /// det^{1/2} g
    pub fn volume_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.metric(x)?.determinant().sqrt())
    }

    pub fn curvature_at(&self, x: &[f64]) -> Result<CurvatureData> {
        self.check(x)?;
        match self {
            ModelManifold::FlatTorus { periods } => {
                let m = periods.len();
                Ok(CurvatureData::from_parts(DMatrix::identity(m, m), Riemann::zeros(m), vec![0.0; m * m * m]))
            }
            ModelManifold::RoundSphere { radius } => {
                let g = self.metric(x)?;
                let (s, c) = x[0].sin_cos();
                let mut gamma = vec![0.0; 8];
                // Γ^θ_φφ = −sinθ cosθ, Γ^φ_θφ = Γ^φ_φθ = cotθ
                gamma[3] = -s * c;
                gamma[5] = c / s;
                gamma[6] = c / s;
                let r = Riemann::constant_curvature(&g, 1.0 / (radius * radius));
                Ok(CurvatureData::from_parts(g, r, gamma))
            }
            ModelManifold::CustomChart(c) => c.curvature(x),
        }
    }

    fn sphere_chart_vector(theta: f64, phi: f64, radius: f64, w: &Vector3<f64>) -> Vec<f64> {
        let (et, ep) = sphere::unit_frame(theta, phi);
        vec![w.dot(&et) / radius, w.dot(&ep) / (radius * theta.sin())]
    }

    fn sphere_ambient_vector(theta: f64, phi: f64, radius: f64, v: &[f64]) -> Vector3<f64> {
        let (et, ep) = sphere::unit_frame(theta, phi);
        (et * v[0] + ep * (v[1] * theta.sin())) * radius
    }

    pub fn exp(&self, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
        self.check(x)?;
        match self {
            ModelManifold::FlatTorus { periods } => Ok(DVector::from_fn(x.len(), |i, _| (x[i] + v[i]).rem_euclid(periods[i]))),
            ModelManifold::RoundSphere { radius } => {
                let p = sphere::unit_point(x[0], x[1]);
                let w = Self::sphere_ambient_vector(x[0], x[1], *radius, v);
                let s = w.norm();
                if s == 0.0 {
                    return Ok(DVector::from_column_slice(x));
                }
                let q = sphere::exp_unit(&p, &(w / s), s / radius);
                let (t, f) = sphere::to_angles(&q);
                Ok(DVector::from_vec(vec![t, f]))
            }
            ModelManifold::CustomChart(c) => c.exp(x, v).map(DVector::from_vec),
        }
    }

    pub fn log(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        self.check(x)?;
        self.check(y)?;
        match self {
            ModelManifold::FlatTorus { periods } => {
                let mut v = DVector::zeros(x.len());
                for i in 0..x.len() {
                    let d = wrap_half(y[i] - x[i], periods[i]);
                    if (d.abs() - periods[i] / 2.0).abs() < 1e-12 * periods[i] {
                        return Err(Error::NoUniqueGeodesic { from: x.to_vec(), to: y.to_vec(), distance: d.abs() });
                    }
                    v[i] = d;
                }
                Ok(v)
            }
            ModelManifold::RoundSphere { radius } => {
                let p = sphere::unit_point(x[0], x[1]);
                let q = sphere::unit_point(y[0], y[1]);
                let ang = sphere::angle(&p, &q);
                if ang > PI * (1.0 - 1e-9) {
                    return Err(Error::NoUniqueGeodesic { from: x.to_vec(), to: y.to_vec(), distance: ang * radius });
                }
                let w = sphere::log_unit(&p, &q) * *radius;
                Ok(DVector::from_vec(Self::sphere_chart_vector(x[0], x[1], *radius, &w)))
            }
            ModelManifold::CustomChart(c) => c.log(x, y).map(DVector::from_vec),
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            ModelManifold::FlatTorus { periods } => {
                self.check(x)?;
                Ok(x.iter().zip(y).zip(periods).map(|((a, b), l)| wrap_half(b - a, *l).powi(2)).sum::<f64>().sqrt())
            }
            ModelManifold::RoundSphere { radius } => {
                self.check(x)?;
                self.check(y)?;
                Ok(radius * sphere::haversine_angle(x[0], x[1], y[0], y[1]))
            }
            ModelManifold::CustomChart(c) => c.distance(x, y),
        }
    }

    /// Point and chart velocity at parameter s along s ↦ exp_x(s v).
    pub fn geodesic(&self, x: &[f64], v: &[f64], s: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        match self {
            ModelManifold::FlatTorus { .. } => {
                let sv: Vec<f64> = v.iter().map(|a| a * s).collect();
                Ok((self.exp(x, &sv)?, DVector::from_column_slice(v)))
            }
            ModelManifold::RoundSphere { radius } => {
                self.check(x)?;
                let p = sphere::unit_point(x[0], x[1]);
                let w = Self::sphere_ambient_vector(x[0], x[1], *radius, v);
                let speed = w.norm();
                if speed == 0.0 {
                    return Ok((DVector::from_column_slice(x), DVector::from_column_slice(v)));
                }
                let u = w / speed;
                let ang = s * speed / radius;
                let q = sphere::exp_unit(&p, &u, ang);
                let dq = (u * ang.cos() - p * ang.sin()) * speed;
                let (t, f) = sphere::to_angles(&q);
                if t.sin() < POLE_GUARD {
                    return Err(Error::SingularPoint(vec![t, f]));
                }
                Ok((DVector::from_vec(vec![t, f]), DVector::from_vec(Self::sphere_chart_vector(t, f, *radius, &dq))))
            }
            ModelManifold::CustomChart(c) => {
                let (p, w) = c.geodesic(x, v, s)?;
                Ok((DVector::from_vec(p), DVector::from_vec(w)))
            }
        }
    }

    /// Orthonormal frame at x, columns in chart components.
    pub fn orthonormal_frame(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x)?;
        match self {
            ModelManifold::FlatTorus { periods } => Ok(DMatrix::identity(periods.len(), periods.len())),
            ModelManifold::RoundSphere { radius } => Ok(DMatrix::from_row_slice(2, 2, &[1.0 / radius, 0.0, 0.0, 1.0 / (radius * x[0].sin())])),
            ModelManifold::CustomChart(c) => c.orthonormal_frame(x),
        }
    }

    /// Levi-Civita transport from y to x along the minimal geodesic, in orthonormal frames.
    pub fn frame_transport(&self, y: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            ModelManifold::FlatTorus { periods } => Ok(DMatrix::identity(periods.len(), periods.len())),
            ModelManifold::RoundSphere { .. } => {
                self.check(x)?;
                self.check(y)?;
                let p = sphere::unit_point(y[0], y[1]);
                let q = sphere::unit_point(x[0], x[1]);
                if sphere::angle(&p, &q) > PI * (1.0 - 1e-9) {
                    return Err(Error::NoUniqueGeodesic { from: y.to_vec(), to: x.to_vec(), distance: self.distance(x, y)? });
                }
                let rot = sphere::transport_rotation(&p, &q);
                let (ext, exp_) = sphere::unit_frame(x[0], x[1]);
                let (eyt, eyp) = sphere::unit_frame(y[0], y[1]);
                Ok(sphere::frame_matrix(&[ext, exp_], &rot, &[eyt, eyp]))
            }
            ModelManifold::CustomChart(c) => c.frame_transport(y, x),
        }
    }

    /// Ric_y(x⃗_y, x⃗_y) where x⃗_y = log_y(x).
    pub fn ricci_along(&self, y: &[f64], x: &[f64]) -> Result<f64> {
        match self {
            ModelManifold::FlatTorus { .. } => Ok(0.0),
            ModelManifold::RoundSphere { radius } => {
                let d = self.distance(y, x)?;
                Ok(d * d / (radius * radius))
            }
            ModelManifold::CustomChart(c) => c.ricci_along(y, x),
        }
    }

    pub fn scalar_curvature(&self, y: &[f64]) -> Result<f64> {
        self.check(y)?;
        match self {
            ModelManifold::FlatTorus { .. } => Ok(0.0),
            ModelManifold::RoundSphere { radius } => Ok(2.0 / (radius * radius)),
            ModelManifold::CustomChart(c) => c.scalar_curvature(y),
        }
    }

    /// Riemann-normal chart centred at x0.
    pub fn riemann_normal_chart(&self, x0: &[f64]) -> Result<CustomChart> {
        self.check(x0)?;
        match self {
            ModelManifold::FlatTorus { .. } => Ok(CustomChart::euclidean(self.dim(), ChartDomain::Ball { radius: self.injectivity_radius() })),
            ModelManifold::RoundSphere { radius } => {
                let base = sphere::unit_point(x0[0], x0[1]);
                let (et, ep) = sphere::unit_frame(x0[0], x0[1]);
                Ok(CustomChart::sphere_normal(*radius, base, [et, ep]))
            }
            ModelManifold::CustomChart(c) => match c.analytic() {
                Some(AnalyticChart::Euclidean) => Ok(c.clone()),
                Some(AnalyticChart::SphereNormal { radius, base, frame }) => {
                    let q = {
                        let rho = (x0[0] * x0[0] + x0[1] * x0[1]).sqrt();
                        let u = rho / radius;
                        base * u.cos() + (frame[0] * x0[0] + frame[1] * x0[1]) * (sphere::sinc(u) / radius)
                    };
                    let rot = sphere::transport_rotation(base, &q);
                    Ok(CustomChart::sphere_normal(*radius, q, [rot * frame[0], rot * frame[1]]))
                }
                None => {
                    let e = c.orthonormal_frame(x0)?;
                    let outer = c.clone();
                    let origin = x0.to_vec();
                    let m = c.dim();
                    let metric: MetricFn = std::sync::Arc::new(move |x: &[f64]| numeric_normal_metric(&outer, &origin, &e, x).unwrap_or_else(|_| DMatrix::from_element(m, m, f64::NAN)));
                    Ok(CustomChart::new(m, metric, ChartDomain::Ball { radius: self.injectivity_radius() / 2.0 }))
                }
            },
        }
    }

    pub fn quadrature_grid(&self, resolution: &[usize]) -> Result<QuadratureGrid> {
        if resolution.len() != self.dim() || resolution.iter().any(|n| *n < 2) {
            return Err(Error::ResolutionTooSmall(resolution.to_vec()));
        }
        match self {
            ModelManifold::FlatTorus { periods } => {
                let total: usize = resolution.iter().product();
                let w: f64 = periods.iter().zip(resolution).map(|(l, n)| l / *n as f64).product();
                let nodes = (0..total)
                    .map(|idx| {
                        let mut rem = idx;
                        let mut x = vec![0.0; periods.len()];
                        for d in (0..periods.len()).rev() {
                            x[d] = periods[d] * (rem % resolution[d]) as f64 / resolution[d] as f64;
                            rem /= resolution[d];
                        }
                        DVector::from_vec(x)
                    })
                    .collect();
                QuadratureGrid::new(periods.len(), nodes, vec![w; total], resolution.to_vec(), self.name())
            }
            ModelManifold::RoundSphere { radius } => {
                let (u, wu) = quadrature::gauss_legendre(resolution[0]);
                let nphi = resolution[1];
                let mut nodes = Vec::new();
                let mut weights = Vec::new();
                for (k, uk) in u.iter().enumerate() {
                    let theta = (-uk).acos();
                    for j in 0..nphi {
                        nodes.push(DVector::from_vec(vec![theta, 2.0 * PI * j as f64 / nphi as f64]));
                        weights.push(radius * radius * wu[k] * 2.0 * PI / nphi as f64);
                    }
                }
                QuadratureGrid::new(2, nodes, weights, resolution.to_vec(), self.name())
            }
            ModelManifold::CustomChart(c) => {
                let (lower, upper) = match c.domain() {
                    ChartDomain::Box { lower, upper } => (lower.clone(), upper.clone()),
                    ChartDomain::Ball { radius } => {
                        let h = radius / 2f64.sqrt() * (1.0 - 1e-9);
                        (vec![-h; c.dim()], vec![h; c.dim()])
                    }
                };
                box_grid(self, &lower, &upper, resolution)
            }
        }
    }
}

/// Cell-centred rule on a coordinate box, weights h^m det^{1/2} g.
pub fn box_grid(manifold: &ModelManifold, lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<QuadratureGrid> {
    let m = lower.len();
    let h: Vec<f64> = (0..m).map(|d| (upper[d] - lower[d]) / counts[d] as f64).collect();
    let cell: f64 = h.iter().product();
    let total: usize = counts.iter().product();
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut x = vec![0.0; m];
        for d in (0..m).rev() {
            x[d] = lower[d] + h[d] * ((rem % counts[d]) as f64 + 0.5);
            rem /= counts[d];
        }
        weights.push(cell * manifold.volume_density(&x)?);
        nodes.push(DVector::from_vec(x));
    }
    QuadratureGrid::new(m, nodes, weights, counts.to_vec(), format!("box {lower:?}..{upper:?}"))
}

/// Metric of the normal chart at `origin` pulled back numerically through exp (Jacobian by differences).
fn numeric_normal_metric(chart: &CustomChart, origin: &[f64], frame: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    let m = x.len();
    let to_chart = |z: &[f64]| -> Result<Vec<f64>> {
        let v = frame * DVector::from_column_slice(z);
        chart.exp(origin, v.as_slice())
    };
    let h = 1e-5;
    let mut jac = DMatrix::zeros(m, m);
    for c in 0..m {
        let mut zp = x.to_vec();
        zp[c] += h;
        let mut zm = x.to_vec();
        zm[c] -= h;
        let (p, q) = (to_chart(&zp)?, to_chart(&zm)?);
        for r in 0..m {
            jac[(r, c)] = (p[r] - q[r]) / (2.0 * h);
        }
    }
    let y = to_chart(x)?;
    let g = chart.metric(&y)?;
    Ok(jac.transpose() * g * jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_fd_curvature(a: f64, theta: f64) -> (f64, f64) {
        // Finite-difference Christoffel/Riemann oracle on the (θ,φ) chart, independent of the closed form.
        let g = |t: f64| [a * a, a * a * t.sin().powi(2)];
        let h = 1e-4;
        let dg22 = |t: f64| (g(t + h)[1] - g(t - h)[1]) / (2.0 * h);
        let gam_t_pp = |t: f64| -0.5 * dg22(t) / g(t)[0];
        let gam_p_tp = |t: f64| 0.5 * dg22(t) / g(t)[1];
        // R^θ_{θφφ} = ∂_θ Γ^θ_φφ − Γ^θ_φφ Γ^φ_θφ (only nonvanishing terms on this chart)
        let d_gam = (gam_t_pp(theta + h) - gam_t_pp(theta - h)) / (2.0 * h);
        let r_up = d_gam - gam_t_pp(theta) * gam_p_tp(theta);
        let r_lower = g(theta)[0] * r_up;
        let scalar = 2.0 * r_lower / (g(theta)[0] * g(theta)[1]);
        (r_lower, scalar)
    }

    #[test]
    fn sphere_curvature_examples() {
        let s = ModelManifold::sphere(1.0);
        let c = s.curvature_at(&[PI / 2.0, 0.3]).unwrap();
        assert!((c.scalar - 2.0).abs() < 1e-12);
        assert!((c.riemann.get(0, 1, 0, 1) - 1.0).abs() < 1e-12);
        let (r, sc) = sphere_fd_curvature(1.0, PI / 2.0);
        assert!((c.riemann.get(0, 1, 0, 1) - r).abs() < 1e-6);
        assert!((c.scalar - sc).abs() < 1e-6);
        let s2 = ModelManifold::sphere(2.0);
        for t in [0.4, 1.3, 2.7] {
            let c = s2.curvature_at(&[t, 1.0]).unwrap();
            assert!((c.scalar - 0.5).abs() < 1e-12);
            let (r, sc) = sphere_fd_curvature(2.0, t);
            assert!((c.riemann.get(0, 1, 0, 1) - r).abs() < 1e-5);
            assert!((c.scalar - sc).abs() < 1e-6);
            assert!(c.riemann.symmetry_defect() < 1e-12);
        }
        assert!(s.curvature_at(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn torus_basics() {
        let t = ModelManifold::torus(&[2.0 * PI]);
        let c = t.curvature_at(&[1.0]).unwrap();
        assert_eq!(c.scalar, 0.0);
        assert_eq!(c.riemann.max_abs(), 0.0);
        let g = t.quadrature_grid(&[4]).unwrap();
        for i in 0..4 {
            assert!((g.node(i)[0] - PI / 2.0 * i as f64).abs() < 1e-15);
            assert!((g.weight(i) - PI / 2.0).abs() < 1e-15);
        }
        let y = t.exp(&[6.0], &[1.0]).unwrap();
        assert!((y[0] - (7.0 - 2.0 * PI)).abs() < 1e-14);
        let v = t.log(&[0.1], &[6.1]).unwrap();
        assert!((v[0] - (6.0 - 2.0 * PI)).abs() < 1e-14);
        assert!(t.log(&[0.0], &[PI]).is_err());
    }

    #[test]
    fn sphere_distance_and_identity() {
        let s = ModelManifold::sphere(1.0);
        let d = s.distance(&[PI / 2.0, 0.0], &[PI / 2.0, PI / 2.0]).unwrap();
        let p = Vector3::<f64>::new(1.0, 0.0, 0.0);
        let q = Vector3::new(0.0, 1.0, 0.0);
        assert!((d - p.dot(&q).acos()).abs() < 1e-15);
        let x = [1.1, 2.0];
        assert_eq!(s.distance(&x, &x).unwrap(), 0.0);
        assert!(s.log(&x, &x).unwrap().norm() == 0.0);
        assert!(s.log(&[PI / 2.0, 0.0], &[PI / 2.0, PI]).is_err());
    }

    #[test]
    fn exp_log_inverse() {
        let s = ModelManifold::sphere(1.5);
        let x = [0.9, 0.4];
        for v in [[0.3, 0.2], [-0.5, 1.0], [1.0, -0.3]] {
            let y = s.exp(&x, &v).unwrap();
            let back = s.log(&x, y.as_slice()).unwrap();
            assert!((back - DVector::from_column_slice(&v)).norm() < 1e-12);
            let dist = s.distance(&x, y.as_slice()).unwrap();
            let g = s.metric(&x).unwrap();
            let vv = DVector::from_column_slice(&v);
            assert!((dist - (vv.transpose() * g * &vv)[(0, 0)].sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_totals() {
        let s = ModelManifold::sphere(1.0);
        let g = s.quadrature_grid(&[24, 48]).unwrap();
        assert!((g.total_weight() - 4.0 * PI).abs() < 1e-10);
        assert!(g.nodes().iter().all(|n| n[0].sin() > 1e-3));
        let c = ModelManifold::CustomChart(CustomChart::euclidean(2, ChartDomain::Box { lower: vec![0.0, 0.0], upper: vec![1.0, 1.0] }));
        let g = c.quadrature_grid(&[8, 8]).unwrap();
        assert!((g.total_weight() - 1.0).abs() < 1e-12);
        assert!(s.quadrature_grid(&[1, 4]).is_err());
    }

    #[test]
    fn equator_transport_is_identity() {
        let s = ModelManifold::sphere(1.0);
        let pt = s.frame_transport(&[PI / 2.0, 0.0], &[PI / 2.0, PI / 2.0]).unwrap();
        assert!((pt - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
    }
}
