use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flatmodel::{h_flat, k0_kernel, FlatModelData};
use crate::geometry::{CustomChart, ModelManifold};
use crate::superalgebra::blade::{self, Blade};
use crate::superalgebra::clifford::{clifford_blade, exterior, grading_conjugate};
use crate::superalgebra::{clifford_symbol, SuperElement};

/// A kernel on ℝ^m valued in End(Λℝ^ℓ ⊗ ℝ^n), where ψ_r acts on the Λ factor.
pub trait ChartKernel: Sync {
    fn dim(&self) -> usize;
    /// ℓ; zero for kernels without a form grading.
    fn lambda_dim(&self) -> usize;
    fn twist_fiber(&self) -> usize;
    fn eval(&self, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>>;

    fn fiber(&self) -> usize {
        (1 << self.lambda_dim()) * self.twist_fiber()
    }
}

fn check_scale(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::ScaleOutOfRange(r))
    }
}

/// Φ_r[K](x, y; t) = r^m ψ_r^{-1} K(rx, ry; r²t) ψ_r.
pub struct Rescaled<'a, K: ?Sized> {
    inner: &'a K,
    r: f64,
}

pub fn phi_r<K: ChartKernel + ?Sized>(k: &K, r: f64) -> Result<Rescaled<'_, K>> {
    check_scale(r)?;
    Ok(Rescaled { inner: k, r })
}

impl<K: ChartKernel + ?Sized> Rescaled<'_, K> {
    pub fn scale(&self) -> f64 {
        self.r
    }
}

impl<K: ChartKernel + ?Sized> ChartKernel for Rescaled<'_, K> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn lambda_dim(&self) -> usize {
        self.inner.lambda_dim()
    }

    fn twist_fiber(&self) -> usize {
        self.inner.twist_fiber()
    }

    fn eval(&self, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let r = self.r;
        let rx: Vec<f64> = x.iter().map(|v| v * r).collect();
        let ry: Vec<f64> = y.iter().map(|v| v * r).collect();
        let k = self.inner.eval(&rx, &ry, r * r * t)?;
        Ok(grading_conjugate(&k, self.lambda_dim(), self.twist_fiber(), r)? * r.powi(self.dim() as i32))
    }
}

/// H_flat on ℝ^m as a scalar kernel.
#[derive(Debug, Clone, Copy)]
pub struct FlatHeat(pub usize);

impl ChartKernel for FlatHeat {
    fn dim(&self) -> usize {
        self.0
    }

    fn lambda_dim(&self) -> usize {
        0
    }

    fn twist_fiber(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, h_flat(self.0, x, y, t)))
    }
}

/// K_0 acting on Λℝ^m ⊗ ℝ^n by exterior multiplication.
#[derive(Debug, Clone)]
pub struct FlatModelKernel(pub FlatModelData);

impl ChartKernel for FlatModelKernel {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn lambda_dim(&self) -> usize {
        self.0.dim()
    }

    fn twist_fiber(&self) -> usize {
        self.0.fiber()
    }

    fn eval(&self, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>> {
        Ok(wedge_action(&k0_kernel(&self.0, x, y, t)?))
    }
}

/// Gaussian times a matrix polynomial of degree one in x and y, with random coefficients.
#[derive(Debug, Clone)]
pub struct GaussianMatrixKernel {
    m: usize,
    lambda: usize,
    n_w: usize,
    constant: DMatrix<f64>,
    linear_x: Vec<DMatrix<f64>>,
    linear_y: Vec<DMatrix<f64>>,
}

impl GaussianMatrixKernel {
    pub fn random(m: usize, lambda: usize, n_w: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (1 << lambda) * n_w;
        let mut mat = || DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let constant = mat();
        let linear_x = (0..m).map(|_| mat()).collect();
        let linear_y = (0..m).map(|_| mat()).collect();
        GaussianMatrixKernel { m, lambda, n_w, constant, linear_x, linear_y }
    }
}

impl ChartKernel for GaussianMatrixKernel {
    fn dim(&self) -> usize {
        self.m
    }

    fn lambda_dim(&self) -> usize {
        self.lambda
    }

    fn twist_fiber(&self) -> usize {
        self.n_w
    }

    fn eval(&self, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let mut out = self.constant.clone();
        for i in 0..self.m {
            out += &self.linear_x[i] * x[i] + &self.linear_y[i] * y[i];
        }
        Ok(out * h_flat(self.m, x, y, t))
    }
}

/// ε(e^I) for the blade I.
fn exterior_blade(m: usize, b: Blade) -> DMatrix<f64> {
    let n = 1 << m;
    let mut e = DMatrix::identity(n, n);
    for i in blade::indices(b) {
        e *= exterior(m, i - 1);
    }
    e
}

/// Σ_I ε(e^I) ⊗ s_I on Λℝ^m ⊗ ℝ^n.
pub fn wedge_action(s: &SuperElement) -> DMatrix<f64> {
    let m = s.dim();
    let n = s.fiber();
    let mut out = DMatrix::zeros((1 << m) * n, (1 << m) * n);
    for (b, c) in s.iter() {
        out += exterior_blade(m, *b).kronecker(c);
    }
    out
}

/// For X = Σ_I c(e_I) B_I on Λℝ^m ⊗ W with B_I in the commutant: Σ_I c_Λ(e_I) ⊗ B_I on
/// Λℝ^m ⊗ (Λℝ^m ⊗ W).
pub fn clifford_image(x: &DMatrix<f64>, m: usize, n_w: usize) -> Result<DMatrix<f64>> {
    let s = clifford_symbol(x, m, n_w)?;
    let n = s.fiber();
    let mut out = DMatrix::zeros((1 << m) * n, (1 << m) * n);
    for (b, c) in s.iter() {
        out += clifford_blade(m, *b).kronecker(c);
    }
    Ok(out)
}

/// The coefficients of an operator on Λℝ^m ⊗ ℝ^n read off from its action on 1 ⊗ ℝ^n.
pub fn action_on_one(a: &DMatrix<f64>, m: usize) -> SuperElement {
    let n = a.nrows() >> m;
    let mut s = SuperElement::zero(m, n);
    for b in 0..(1usize << m) {
        let block = a.view((b * n, 0), (n, n)).clone_owned();
        if block.amax() != 0.0 {
            s.set(b as Blade, block);
        }
    }
    s
}

/// Normal-coordinate data at a base point together with the scale r.
#[derive(Debug, Clone)]
pub struct RescaleFamily {
    manifold: ModelManifold,
    x0: Vec<f64>,
    chart: CustomChart,
    frame: DMatrix<f64>,
    r: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GrIdentityResiduals {
    pub metric: f64,
    pub distance: f64,
    pub log: f64,
    pub ricci: f64,
    pub scalar: f64,
    pub volume: f64,
}

impl GrIdentityResiduals {
    pub fn max(&self) -> f64 {
        [self.metric, self.distance, self.log, self.ricci, self.scalar, self.volume].into_iter().fold(0.0, f64::max)
    }
}

impl RescaleFamily {
    pub fn new(manifold: ModelManifold, x0: &[f64]) -> Result<Self> {
        let chart = manifold.riemann_normal_chart(x0)?;
        let frame = manifold.orthonormal_frame(x0)?;
        Ok(RescaleFamily { manifold, x0: x0.to_vec(), chart, frame, r: 1.0 })
    }

    pub fn with_scale(&self, r: f64) -> Result<Self> {
        check_scale(r)?;
        Ok(RescaleFamily { r, ..self.clone() })
    }

    pub fn scale(&self) -> f64 {
        self.r
    }

    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn base_point(&self) -> &[f64] {
        &self.x0
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    /// The normal chart with metric g_1.
    pub fn chart(&self) -> &CustomChart {
        &self.chart
    }

    /// The normal chart with metric g_r = r^{-2}φ_r^*g_1.
    pub fn rescaled_chart(&self) -> Result<CustomChart> {
        self.chart.rescaled(self.r)
    }

    /// Manifold point exp_{x0}(Σ v_a e_a).
    pub fn point(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.chart.check(v)?;
        let w = &self.frame * DVector::from_column_slice(v);
        Ok(self.manifold.exp(&self.x0, w.as_slice())?.iter().copied().collect())
    }

    /// Residuals of the scaling identities of g_r at the sample pairs (x, y), in g_r coordinates.
    pub fn identity_residuals(&self, samples: &[(Vec<f64>, Vec<f64>)]) -> Result<GrIdentityResiduals> {
        let r = self.r;
        let g1 = &self.chart;
        let gr = self.rescaled_chart()?;
        let mut res = GrIdentityResiduals::default();
        for (x, y) in samples {
            let rx: Vec<f64> = x.iter().map(|v| v * r).collect();
            let ry: Vec<f64> = y.iter().map(|v| v * r).collect();
            res.metric = res.metric.max((gr.metric(x)? - g1.metric(&rx)?).amax());
            res.distance = res.distance.max((gr.distance(x, y)? - g1.distance(&rx, &ry)? / r).abs());
            let lr = DVector::from_vec(gr.log(x, y)?);
            let l1 = DVector::from_vec(g1.log(&rx, &ry)?) / r;
            res.log = res.log.max((lr - l1).amax());
            res.ricci = res.ricci.max((gr.ricci_along(x, y)? - g1.ricci_along(&rx, &ry)?).abs());
            res.scalar = res.scalar.max((gr.scalar_curvature(y)? - r * r * g1.scalar_curvature(&ry)?).abs());
            // dμ_{g_r}(y) = r^{-m} dμ_{g_1}(ry) as densities: det^{1/2} g_r(y) = det^{1/2} g_1(ry)
            let vr = gr.metric(y)?.determinant().sqrt();
            let v1 = g1.metric(&ry)?.determinant().sqrt();
            res.volume = res.volume.max((vr - v1).abs());
        }
        Ok(res)
    }
}

/// Uniform lattice through the origin, clipped to a ball.
#[derive(Debug, Clone)]
pub struct LatticeQuadrature {
    pub radius: f64,
    pub step: f64,
}

impl LatticeQuadrature {
    /// Nodes with |u| < radius.
    pub fn nodes(&self, m: usize) -> Vec<Vec<f64>> {
        let k = (self.radius / self.step).floor() as i64;
        let side: Vec<f64> = (-k..=k).map(|i| i as f64 * self.step).collect();
        let mut out: Vec<Vec<f64>> = vec![vec![]];
        for _ in 0..m {
            out = out.into_iter().flat_map(|p| side.iter().map(move |v| [p.clone(), vec![*v]].concat())).collect();
        }
        out.retain(|p| p.iter().map(|v| v * v).sum::<f64>() < self.radius * self.radius);
        out
    }
}

/// Relative residual ‖Φ_r[J ∗₁ K] − Φ_r[J] ∗_r Φ_r[K]‖ at (x, z), with the ∗_r quadrature on the
/// lattice scaled by 1/r so both sides use the same sample points.
#[allow(clippy::too_many_arguments)]
pub fn homomorphism_residual<J: ChartKernel + ?Sized, K: ChartKernel + ?Sized>(
    j: &J,
    k: &K,
    chart: &CustomChart,
    r: f64,
    x: &[f64],
    z: &[f64],
    t1: f64,
    t2: f64,
    quad: &LatticeQuadrature,
) -> Result<f64> {
    check_scale(r)?;
    let m = j.dim();
    let chart_r = chart.rescaled(r)?;
    let cell = quad.step.powi(m as i32);
    let rx: Vec<f64> = x.iter().map(|v| v * r).collect();
    let rz: Vec<f64> = z.iter().map(|v| v * r).collect();
    let n = j.fiber();
    let mut jk = DMatrix::zeros(n, n);
    let mut prod_r = DMatrix::zeros(n, n);
    let pj = phi_r(j, r)?;
    let pk = phi_r(k, r)?;
    for u in quad.nodes(m) {
        let w1 = chart.metric(&u)?.determinant().sqrt() * cell;
        jk += j.eval(&rx, &u, r * r * t1)? * k.eval(&u, &rz, r * r * t2)? * w1;
        let y: Vec<f64> = u.iter().map(|v| v / r).collect();
        let wr = chart_r.metric(&y)?.determinant().sqrt() * cell / r.powi(m as i32);
        prod_r += pj.eval(x, &y, t1)? * pk.eval(&y, z, t2)? * wr;
    }
    let lhs = grading_conjugate(&jk, j.lambda_dim(), j.twist_fiber(), r)? * r.powi(m as i32);
    Ok((&lhs - prod_r).amax() / lhs.amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superalgebra::clifford::clifford_generator;

    #[test]
    fn unit_scale_is_identity() {
        let k = GaussianMatrixKernel::random(2, 2, 1, 3);
        let p = phi_r(&k, 1.0).unwrap();
        let (x, y) = ([0.3, -0.2], [0.1, 0.5]);
        assert_eq!(p.eval(&x, &y, 0.7).unwrap(), k.eval(&x, &y, 0.7).unwrap());
    }

    #[test]
    fn flat_heat_is_scale_invariant() {
        let h = FlatHeat(2);
        for r in [0.5, 0.1] {
            let p = phi_r(&h, r).unwrap();
            let a = p.eval(&[0.3, 0.4], &[-0.2, 0.9], 0.6).unwrap()[(0, 0)];
            let b = h.eval(&[0.3, 0.4], &[-0.2, 0.9], 0.6).unwrap()[(0, 0)];
            assert!((a - b).abs() < 1e-14 * b);
        }
    }

    #[test]
    fn scale_out_of_range() {
        assert!(matches!(phi_r(&FlatHeat(1), 0.0), Err(Error::ScaleOutOfRange(_))));
        assert!(matches!(phi_r(&FlatHeat(1), 1.5), Err(Error::ScaleOutOfRange(_))));
    }

    #[test]
    fn clifford_image_is_multiplicative() {
        let m = 2;
        let a = clifford_generator(m, 0) + DMatrix::identity(4, 4) * 0.3;
        let b = clifford_generator(m, 1) * &clifford_generator(m, 0);
        let lhs = clifford_image(&(&a * &b), m, 1).unwrap();
        let rhs = clifford_image(&a, m, 1).unwrap() * clifford_image(&b, m, 1).unwrap();
        assert!((lhs - rhs).amax() < 1e-13);
    }

    #[test]
    fn g_r_identities_on_sphere() {
        let fam = RescaleFamily::new(ModelManifold::sphere(1.0), &[1.0, 0.4]).unwrap();
        let samples = vec![(vec![0.3, -0.2], vec![-0.4, 0.5]), (vec![1.0, 0.2], vec![0.7, -0.9])];
        for r in [1.0, 0.5, 0.1] {
            let res = fam.with_scale(r).unwrap().identity_residuals(&samples).unwrap();
            assert!(res.max() < 1e-8, "{res:?}");
        }
    }

    #[test]
    fn homomorphism_on_sphere_chart() {
        let fam = RescaleFamily::new(ModelManifold::sphere(1.0), &[1.0, 0.4]).unwrap();
        let j = GaussianMatrixKernel::random(2, 2, 1, 11);
        let k = GaussianMatrixKernel::random(2, 2, 1, 12);
        let quad = LatticeQuadrature { radius: 2.0, step: 0.1 };
        for r in [0.7, 0.2] {
            let res = homomorphism_residual(&j, &k, fam.chart(), r, &[0.2, 0.1], &[-0.1, 0.3], 0.4, 0.3, &quad).unwrap();
            assert!(res < 1e-8, "{res}");
        }
    }
}
