//! User-supplied charts on ℝ^m: numeric geometry by finite differences, RK4 geodesics and
//! Newton shooting, plus closed forms for Euclidean and sphere-normal charts.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3x2, Vector3};

use super::curvature::{CurvatureData, Riemann};
use super::sphere;
use crate::error::{Error, Result};

pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum ChartDomain {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { radius: f64 },
}

impl ChartDomain {
    fn check(&self, x: &[f64]) -> Result<()> {
        match self {
            ChartDomain::Box { lower, upper } => {
                let inside = x.iter().zip(lower.iter().zip(upper)).all(|(v, (a, b))| *v >= *a && *v <= *b);
                if inside {
                    Ok(())
                } else {
                    let needed = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    let available = lower.iter().chain(upper).fold(f64::INFINITY, |a, v| a.min(v.abs()));
                    Err(Error::ChartDomainExceeded { needed, available })
                }
            }
            ChartDomain::Ball { radius } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r < *radius {
                    Ok(())
                } else {
                    Err(Error::ChartDomainExceeded { needed: r, available: *radius })
                }
            }
        }
    }

    fn scaled(&self, f: f64) -> ChartDomain {
        match self {
            ChartDomain::Box { lower, upper } => ChartDomain::Box {
                lower: lower.iter().map(|v| v * f).collect(),
                upper: upper.iter().map(|v| v * f).collect(),
            },
            ChartDomain::Ball { radius } => ChartDomain::Ball { radius: radius * f },
        }
    }
}

/// Closed-form geometry available for a chart.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticChart {
    Euclidean,
    /// Riemann-normal chart of the sphere of the given radius, centred at `base` with tangent frame `frame`.
    SphereNormal { radius: f64, base: Vector3<f64>, frame: [Vector3<f64>; 2] },
}

#[derive(Clone)]
pub struct CustomChart {
    dim: usize,
    metric: MetricFn,
    domain: ChartDomain,
    analytic: Option<AnalyticChart>,
    fd_step: f64,
    ode_steps: usize,
}

impl std::fmt::Debug for CustomChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomChart")
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("analytic", &self.analytic)
            .finish()
    }
}

impl PartialEq for CustomChart {
    fn eq(&self, o: &Self) -> bool {
        self.dim == o.dim
            && self.domain == o.domain
            && self.analytic == o.analytic
            && (self.analytic.is_some() || Arc::ptr_eq(&self.metric, &o.metric))
    }
}

fn sphere_normal_metric(radius: f64, x: &[f64]) -> DMatrix<f64> {
    let rho2: f64 = x.iter().map(|v| v * v).sum();
    let u = rho2.sqrt() / radius;
    let s = sphere::sinc(u);
    let c = sphere::one_minus_sinc2_over_u2(u) / (radius * radius);
    DMatrix::from_fn(2, 2, |i, j| if i == j { s * s } else { 0.0 } + c * x[i] * x[j])
}

impl CustomChart {
    pub fn new(dim: usize, metric: MetricFn, domain: ChartDomain) -> Self {
        CustomChart { dim, metric, domain, analytic: None, fd_step: 1e-3, ode_steps: 200 }
    }

    pub fn euclidean(dim: usize, domain: ChartDomain) -> Self {
        let metric: MetricFn = Arc::new(move |_| DMatrix::identity(dim, dim));
        CustomChart { analytic: Some(AnalyticChart::Euclidean), ..CustomChart::new(dim, metric, domain) }
    }

    pub fn sphere_normal(radius: f64, base: Vector3<f64>, frame: [Vector3<f64>; 2]) -> Self {
        let metric: MetricFn = Arc::new(move |x| sphere_normal_metric(radius, x));
        CustomChart {
            analytic: Some(AnalyticChart::SphereNormal { radius, base, frame }),
            ..CustomChart::new(2, metric, ChartDomain::Ball { radius: std::f64::consts::PI * radius })
        }
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn with_ode_steps(mut self, n: usize) -> Self {
        self.ode_steps = n.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn analytic(&self) -> Option<&AnalyticChart> {
        self.analytic.as_ref()
    }

    /// Same metric with all closed forms dropped.
    pub fn numeric(&self) -> CustomChart {
        CustomChart { analytic: None, ..self.clone() }
    }

    /// Chart with metric x ↦ g(r x).
    pub fn rescaled(&self, r: f64) -> Result<CustomChart> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::ScaleOutOfRange(r));
        }
        let analytic = match &self.analytic {
            Some(AnalyticChart::SphereNormal { radius, base, frame }) => {
                return Ok(CustomChart { fd_step: self.fd_step, ode_steps: self.ode_steps, ..CustomChart::sphere_normal(radius / r, *base, *frame) })
            }
            other => other.clone(),
        };
        let inner = self.metric.clone();
        let metric: MetricFn = Arc::new(move |x: &[f64]| {
            let y: Vec<f64> = x.iter().map(|v| v * r).collect();
            inner(&y)
        });
        Ok(CustomChart { dim: self.dim, metric, domain: self.domain.scaled(1.0 / r), analytic, fd_step: self.fd_step, ode_steps: self.ode_steps })
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!("point of dimension {} in a {}-dimensional chart", x.len(), self.dim)));
        }
        self.domain.check(x)
    }

    pub fn metric(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let g = (self.metric)(x);
        if g.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(x.to_vec()));
        }
        Ok(g)
    }

    fn raw_metric(&self, x: &[f64]) -> DMatrix<f64> {
        (self.metric)(x)
    }

    /// 4th-order central difference of the metric along axis k.
    fn metric_derivative(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        let h = self.fd_step;
        let shifted = |d: f64| {
            let mut y = x.to_vec();
            y[k] += d;
            self.raw_metric(&y)
        };
        (shifted(-2.0 * h) - shifted(2.0 * h) + (shifted(h) - shifted(-h)) * 8.0) / (12.0 * h)
    }

    /// Γ^k_ij at (k·m + i)·m + j.
    pub fn christoffel(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.metric(x)?;
        Ok(self.christoffel_from(x, &g))
    }

    fn christoffel_from(&self, x: &[f64], g: &DMatrix<f64>) -> Vec<f64> {
        let m = self.dim;
        if matches!(self.analytic, Some(AnalyticChart::Euclidean)) {
            return vec![0.0; m * m * m];
        }
        let ginv = g.clone().try_inverse().expect("metric is invertible");
        let dg: Vec<DMatrix<f64>> = (0..m).map(|k| self.metric_derivative(x, k)).collect();
        let mut out = vec![0.0; m * m * m];
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    let mut s = 0.0;
                    for l in 0..m {
                        s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    out[(k * m + i) * m + j] = 0.5 * s;
                }
            }
        }
        out
    }

    pub fn curvature(&self, x: &[f64]) -> Result<CurvatureData> {
        let g = self.metric(x)?;
        let m = self.dim;
        let gamma = self.christoffel_from(x, &g);
        let riemann = match &self.analytic {
            Some(AnalyticChart::Euclidean) => Riemann::zeros(m),
            Some(AnalyticChart::SphereNormal { radius, .. }) => Riemann::constant_curvature(&g, 1.0 / (radius * radius)),
            None => self.numeric_riemann(x, &g, &gamma),
        };
        Ok(CurvatureData::from_parts(g, riemann, gamma))
    }

    fn numeric_riemann(&self, x: &[f64], g: &DMatrix<f64>, gamma: &[f64]) -> Riemann {
        let m = self.dim;
        let h = self.fd_step;
        let gam = |y: &[f64]| self.christoffel_from(y, &self.raw_metric(y));
        // dgam[a][(k*m+i)*m+j] = ∂_a Γ^k_ij
        let dgam: Vec<Vec<f64>> = (0..m)
            .map(|a| {
                let at = |d: f64| {
                    let mut y = x.to_vec();
                    y[a] += d;
                    gam(&y)
                };
                let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
                (0..m * m * m).map(|t| (m2[t] - p2[t] + 8.0 * (p1[t] - m1[t])) / (12.0 * h)).collect()
            })
            .collect();
        let gi = |k: usize, i: usize, j: usize| gamma[(k * m + i) * m + j];
        // R^q_{ijl} = ∂_i Γ^q_jl − ∂_j Γ^q_il + Γ^q_ip Γ^p_jl − Γ^q_jp Γ^p_il
        let mut up = vec![0.0; m * m * m * m];
        for q in 0..m {
            for i in 0..m {
                for j in 0..m {
                    for l in 0..m {
                        let mut s = dgam[i][(q * m + j) * m + l] - dgam[j][(q * m + i) * m + l];
                        for p in 0..m {
                            s += gi(q, i, p) * gi(p, j, l) - gi(q, j, p) * gi(p, i, l);
                        }
                        up[((q * m + i) * m + j) * m + l] = s;
                    }
                }
            }
        }
        let mut r = Riemann::zeros(m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let s: f64 = (0..m).map(|q| g[(k, q)] * up[((q * m + i) * m + j) * m + l]).sum();
                        r.set(i, j, k, l, s);
                    }
                }
            }
        }
        r
    }

    /// RK4 integration of the geodesic equation for unit parameter time; also transports a
    /// coordinate-frame matrix when `transport` is given. Returns (point, velocity, transported).
    fn integrate(&self, x: &[f64], v: &[f64], transport: Option<DMatrix<f64>>) -> Result<(Vec<f64>, Vec<f64>, Option<DMatrix<f64>>)> {
        let m = self.dim;
        let n = self.ode_steps;
        let h = 1.0 / n as f64;
        let mut pos = x.to_vec();
        let mut vel = v.to_vec();
        let mut u = transport;
        let deriv = |p: &[f64], w: &[f64], uu: &Option<DMatrix<f64>>| -> (Vec<f64>, Vec<f64>, Option<DMatrix<f64>>) {
            let gamma = self.christoffel_from(p, &self.raw_metric(p));
            let acc: Vec<f64> = (0..m)
                .map(|k| {
                    let mut s = 0.0;
                    for i in 0..m {
                        for j in 0..m {
                            s += gamma[(k * m + i) * m + j] * w[i] * w[j];
                        }
                    }
                    -s
                })
                .collect();
            let du = uu.as_ref().map(|mat| {
                let a = DMatrix::from_fn(m, m, |k, j| (0..m).map(|i| gamma[(k * m + i) * m + j] * w[i]).sum::<f64>());
                -(a * mat)
            });
            (w.to_vec(), acc, du)
        };
        let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
        for _ in 0..n {
            self.domain.check(&pos)?;
            let (k1x, k1v, k1u) = deriv(&pos, &vel, &u);
            let u2 = u.as_ref().map(|mm| mm + k1u.as_ref().unwrap() * (0.5 * h));
            let (k2x, k2v, k2u) = deriv(&add(&pos, &k1x, 0.5 * h), &add(&vel, &k1v, 0.5 * h), &u2);
            let u3 = u.as_ref().map(|mm| mm + k2u.as_ref().unwrap() * (0.5 * h));
            let (k3x, k3v, k3u) = deriv(&add(&pos, &k2x, 0.5 * h), &add(&vel, &k2v, 0.5 * h), &u3);
            let u4 = u.as_ref().map(|mm| mm + k3u.as_ref().unwrap() * h);
            let (k4x, k4v, k4u) = deriv(&add(&pos, &k3x, h), &add(&vel, &k3v, h), &u4);
            for k in 0..m {
                pos[k] += h / 6.0 * (k1x[k] + 2.0 * k2x[k] + 2.0 * k3x[k] + k4x[k]);
                vel[k] += h / 6.0 * (k1v[k] + 2.0 * k2v[k] + 2.0 * k3v[k] + k4v[k]);
            }
            if let Some(mm) = u.as_mut() {
                *mm += (k1u.unwrap() + k2u.unwrap() * 2.0 + k3u.unwrap() * 2.0 + k4u.unwrap()) * (h / 6.0);
            }
        }
        self.domain.check(&pos)?;
        Ok((pos, vel, u))
    }

    fn embed(&self, x: &[f64]) -> Option<Vector3<f64>> {
        match &self.analytic {
            Some(AnalyticChart::SphereNormal { radius, base, frame }) => {
                let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let u = rho / radius;
                let dir = frame[0] * x[0] + frame[1] * x[1];
                Some(base * u.cos() + dir * (sphere::sinc(u) / radius))
            }
            _ => None,
        }
    }

    fn unembed(&self, q: &Vector3<f64>) -> Vec<f64> {
        match &self.analytic {
            Some(AnalyticChart::SphereNormal { radius, base, frame }) => {
                let w = sphere::log_unit(base, q) * *radius;
                vec![w.dot(&frame[0]), w.dot(&frame[1])]
            }
            _ => unreachable!("unembed on a chart without an embedding"),
        }
    }

    /// d(embedding)/dx as a 3×2 matrix (ambient radius-a sphere).
    fn embedding_jacobian(&self, x: &[f64]) -> Matrix3x2<f64> {
        let Some(AnalyticChart::SphereNormal { radius, base, frame }) = &self.analytic else {
            unreachable!("jacobian on a chart without an embedding")
        };
        let a = *radius;
        let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let e = Matrix3x2::from_columns(&[frame[0], frame[1]]);
        if rho < 1e-14 {
            return e;
        }
        let u = rho / a;
        let xhat = nalgebra::Vector2::new(x[0] / rho, x[1] / rho);
        let ehat = e * xhat;
        let s = sphere::sinc(u);
        let radial = ehat * u.cos() - base * u.sin();
        radial * xhat.transpose() + (e - ehat * xhat.transpose()) * s
    }

    /// Ambient tangent vector (radius-a sphere) at chart point x → chart components.
    fn ambient_to_chart(&self, x: &[f64], w: &Vector3<f64>) -> Vec<f64> {
        let j = self.embedding_jacobian(x);
        let g = j.transpose() * j;
        let v = g.try_inverse().expect("chart jacobian has full rank") * (j.transpose() * w);
        vec![v[0], v[1]]
    }

    pub fn exp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        match &self.analytic {
            Some(AnalyticChart::Euclidean) => {
                let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + b).collect();
                self.check(&y)?;
                Ok(y)
            }
            Some(AnalyticChart::SphereNormal { radius, .. }) => {
                let p = self.embed(x).unwrap();
                let w = self.embedding_jacobian(x) * nalgebra::Vector2::new(v[0], v[1]);
                let s = w.norm();
                if s == 0.0 {
                    return Ok(x.to_vec());
                }
                let q = sphere::exp_unit(&p, &(w / s), s / radius);
                let y = self.unembed(&q);
                self.check(&y)?;
                Ok(y)
            }
            None => Ok(self.integrate(x, v, None)?.0),
        }
    }

    pub fn log(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        self.check(y)?;
        match &self.analytic {
            Some(AnalyticChart::Euclidean) => Ok(y.iter().zip(x).map(|(a, b)| a - b).collect()),
            Some(AnalyticChart::SphereNormal { radius, .. }) => {
                let p = self.embed(x).unwrap();
                let q = self.embed(y).unwrap();
                let ang = sphere::angle(&p, &q);
                if ang > std::f64::consts::PI * (1.0 - 1e-9) {
                    return Err(Error::NoUniqueGeodesic { from: x.to_vec(), to: y.to_vec(), distance: ang * radius });
                }
                let w = sphere::log_unit(&p, &q) * *radius;
                Ok(self.ambient_to_chart(x, &w))
            }
            None => self.shoot(x, y),
        }
    }

    fn shoot(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let m = self.dim;
        let mut v: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let scale = 1.0 + v.iter().map(|a| a.abs()).fold(0.0, f64::max);
        let mut residual = f64::INFINITY;
        for _ in 0..50 {
            let end = self.integrate(x, &v, None)?.0;
            let f: Vec<f64> = end.iter().zip(y).map(|(a, b)| a - b).collect();
            residual = f.iter().map(|a| a.abs()).fold(0.0, f64::max);
            if residual < 1e-13 * scale {
                return Ok(v);
            }
            let dv = 1e-6 * scale;
            let mut jac = DMatrix::zeros(m, m);
            for c in 0..m {
                let mut vp = v.clone();
                vp[c] += dv;
                let mut vm = v.clone();
                vm[c] -= dv;
                let ep = self.integrate(x, &vp, None)?.0;
                let em = self.integrate(x, &vm, None)?.0;
                for r in 0..m {
                    jac[(r, c)] = (ep[r] - em[r]) / (2.0 * dv);
                }
            }
            let step = jac
                .lu()
                .solve(&DVector::from_vec(f))
                .ok_or(Error::ShootingFailed { iterations: 0, residual })?;
            for k in 0..m {
                v[k] -= step[k];
            }
        }
        Err(Error::ShootingFailed { iterations: 50, residual })
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match &self.analytic {
            Some(AnalyticChart::SphereNormal { radius, .. }) => {
                self.check(x)?;
                self.check(y)?;
                Ok(radius * sphere::angle(&self.embed(x).unwrap(), &self.embed(y).unwrap()))
            }
            _ => {
                let v = self.log(x, y)?;
                let g = self.metric(x)?;
                let vv = DVector::from_vec(v);
                Ok((vv.transpose() * g * &vv)[(0, 0)].max(0.0).sqrt())
            }
        }
    }

    /// Point and velocity at parameter s of the geodesic s ↦ exp_x(s v).
    pub fn geodesic(&self, x: &[f64], v: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.analytic {
            None => {
                let sv: Vec<f64> = v.iter().map(|a| a * s).collect();
                let (p, w, _) = self.integrate(x, &sv, None)?;
                Ok((p, w.iter().map(|a| a / s.max(f64::MIN_POSITIVE)).collect()))
            }
            Some(AnalyticChart::Euclidean) => Ok((x.iter().zip(v).map(|(a, b)| a + s * b).collect(), v.to_vec())),
            Some(AnalyticChart::SphereNormal { radius, .. }) => {
                let p = self.embed(x).unwrap();
                let w = self.embedding_jacobian(x) * nalgebra::Vector2::new(v[0], v[1]);
                let speed = w.norm();
                if speed == 0.0 {
                    return Ok((x.to_vec(), v.to_vec()));
                }
                let u = w / speed;
                let ang = s * speed / radius;
                let q = sphere::exp_unit(&p, &u, ang);
                let dq = (u * ang.cos() - p * ang.sin()) * speed;
                let y = self.unembed(&q);
                let vy = self.ambient_to_chart(&y, &dq);
                Ok((y, vy))
            }
        }
    }

    /// Orthonormal frame at x in chart components (columns). Sphere-normal charts use the
    /// radially parallel frame; other charts use g^{-1/2}.
    pub fn orthonormal_frame(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.metric(x)?;
        match &self.analytic {
            Some(AnalyticChart::Euclidean) => Ok(DMatrix::identity(self.dim, self.dim)),
            Some(AnalyticChart::SphereNormal { base, frame, .. }) => {
                let p = self.embed(x).unwrap();
                let rot = sphere::transport_rotation(base, &p);
                let cols: Vec<Vec<f64>> = frame.iter().map(|f| self.ambient_to_chart(x, &(rot * f))).collect();
                Ok(DMatrix::from_fn(2, 2, |i, j| cols[j][i]))
            }
            None => {
                let eig = g.symmetric_eigen();
                let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
                Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
            }
        }
    }

    /// Levi-Civita transport y → x along the minimal geodesic, in orthonormal frames.
    pub fn frame_transport(&self, y: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.analytic {
            Some(AnalyticChart::Euclidean) => Ok(DMatrix::identity(self.dim, self.dim)),
            Some(AnalyticChart::SphereNormal { base, frame, radius }) => {
                self.check(x)?;
                self.check(y)?;
                let px = self.embed(x).unwrap();
                let py = self.embed(y).unwrap();
                if sphere::angle(&px, &py) > std::f64::consts::PI * (1.0 - 1e-9) {
                    return Err(Error::NoUniqueGeodesic { from: y.to_vec(), to: x.to_vec(), distance: radius * sphere::angle(&px, &py) });
                }
                let rot = sphere::transport_rotation(&px, base) * sphere::transport_rotation(&py, &px) * sphere::transport_rotation(base, &py);
                Ok(sphere::frame_matrix(frame, &rot, frame))
            }
            None => {
                let v = self.log(y, x)?;
                let (_, _, u) = self.integrate(y, &v, Some(DMatrix::identity(self.dim, self.dim)))?;
                let ex = self.orthonormal_frame(x)?;
                let ey = self.orthonormal_frame(y)?;
                Ok(ex.try_inverse().expect("frame is invertible") * u.unwrap() * ey)
            }
        }
    }

    /// Ric(log_y x, log_y x) evaluated at y.
    pub fn ricci_along(&self, y: &[f64], x: &[f64]) -> Result<f64> {
        match &self.analytic {
            Some(AnalyticChart::Euclidean) => Ok(0.0),
            Some(AnalyticChart::SphereNormal { radius, .. }) => {
                let d = self.distance(y, x)?;
                Ok(d * d / (radius * radius))
            }
            None => {
                let v = self.log(y, x)?;
                Ok(self.curvature(y)?.ricci_quadratic(&v))
            }
        }
    }

    pub fn scalar_curvature(&self, y: &[f64]) -> Result<f64> {
        match &self.analytic {
            Some(AnalyticChart::Euclidean) => Ok(0.0),
            Some(AnalyticChart::SphereNormal { radius, .. }) => Ok(2.0 / (radius * radius)),
            None => Ok(self.curvature(y)?.scalar),
        }
    }
}
