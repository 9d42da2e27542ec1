use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{parallel_transport, sphere, ConnectionSpec, ModelManifold, QuadratureGrid};
use crate::par::{self, Execution};

use super::operator::OperatorKernel;
use super::partition::KernelFamily;

pub type PotentialFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Zeroth-order term V of Δ = Δ^∇ − V.
#[derive(Clone)]
pub enum Potential {
    Zero,
    Constant(DMatrix<f64>),
    Field(PotentialFn),
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Potential::Zero => write!(f, "Zero"),
            Potential::Constant(v) => write!(f, "Constant({v})"),
            Potential::Field(_) => write!(f, "Field"),
        }
    }
}

impl Potential {
    pub fn at(&self, x: &[f64], n: usize) -> DMatrix<f64> {
        match self {
            Potential::Zero => DMatrix::zeros(n, n),
            Potential::Constant(v) => v.clone(),
            Potential::Field(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }
}

/// Data of a generalized Laplacian together with the cutoff and curvature-correction weights of its kernel.
#[derive(Debug, Clone)]
pub struct GeneralizedLaplacianSpec {
    pub manifold: ModelManifold,
    pub connection: ConnectionSpec,
    pub potential: Potential,
    pub cutoff: f64,
    pub ricci_coeff: f64,
    pub scalar_coeff: f64,
}

impl GeneralizedLaplacianSpec {
    pub fn new(manifold: ModelManifold, connection: ConnectionSpec, potential: Potential) -> Self {
        let cutoff = manifold.default_cutoff();
        GeneralizedLaplacianSpec { manifold, connection, potential, cutoff, ricci_coeff: 1.0 / 12.0, scalar_coeff: 1.0 / 12.0 }
    }

    /// Scalar Laplacian, trivial line bundle.
    pub fn scalar(manifold: ModelManifold) -> Self {
        Self::new(manifold, ConnectionSpec::trivial(1), Potential::Zero)
    }

    pub fn with_cutoff(mut self, d: f64) -> Self {
        self.cutoff = d;
        self
    }

    pub fn with_corrections(mut self, ricci: f64, scalar: f64) -> Self {
        self.ricci_coeff = ricci;
        self.scalar_coeff = scalar;
        self
    }

    pub fn fiber(&self) -> usize {
        self.connection.fiber()
    }

    pub fn potential_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.fiber();
        let v = self.potential.at(x, n);
        if v.shape() != (n, n) {
            return Err(Error::Shape(format!("potential is {:?}, fiber is {n}", v.shape())));
        }
        if !v.iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidArgument(format!("potential not finite at {x:?}")));
        }
        Ok(v)
    }

    fn half_potential_exp(&self, x: &[f64], t: f64) -> Result<DMatrix<f64>> {
        if self.potential.is_zero() {
            return Ok(DMatrix::identity(self.fiber(), self.fiber()));
        }
        let e = (self.potential_at(x)? * (-0.5 * t)).exp();
        if e.iter().all(|a| a.is_finite()) {
            Ok(e)
        } else {
            Err(Error::MatrixExp(format!("exp(−tV/2) overflowed at {x:?}, t = {t}")))
        }
    }

    fn factor(&self, x: &[f64], y: &[f64], d: f64, t: f64, scal_y: f64) -> Result<f64> {
        if d >= self.cutoff {
            return Ok(0.0);
        }
        let ric = match &self.manifold {
            ModelManifold::RoundSphere { radius } => d * d / (radius * radius),
            _ => self.manifold.ricci_along(y, x)?,
        };
        Ok(gaussian(self.manifold.dim(), d, t) * (self.ricci_coeff * ric + self.scalar_coeff * t * scal_y).exp())
    }

    fn block(&self, x: &[f64], y: &[f64], d: f64, t: f64, expv: &DMatrix<f64>, scal_y: f64) -> Result<DMatrix<f64>> {
        let n = self.fiber();
        if d >= self.cutoff {
            return Ok(DMatrix::zeros(n, n));
        }
        let factor = self.factor(x, y, d, t, scal_y)?;
        let pt = parallel_transport(&self.manifold, &self.connection, y, x)?;
        Ok(expv * pt * factor)
    }

    /// The scalar part H_D·exp(c_R Ric_y(x⃗_y,x⃗_y) + c_S t scal_y) of the kernel; zero past the cutoff.
    pub fn scalar_factor(&self, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
        }
        let d = match self.manifold.distance(x, y) {
            Ok(d) => d,
            Err(Error::SingularPoint(p)) => return Err(Error::SingularPoint(p)),
            Err(_) => return Ok(0.0),
        };
        let scal = self.manifold.scalar_curvature(y)?;
        self.factor(x, y, d, t, scal)
    }
}

fn gaussian(m: usize, d: f64, t: f64) -> f64 {
    (2.0 * PI * t).powf(-(m as f64) / 2.0) * (-d * d / (2.0 * t)).exp()
}

/// Cutoff Gaussian χ_{<D}(2πt)^{−m/2}e^{−d²/2t}; points without a unique geodesic count as beyond the cutoff.
pub fn h_kernel(manifold: &ModelManifold, x: &[f64], y: &[f64], t: f64, cutoff: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    match manifold.distance(x, y) {
        Ok(d) if d < cutoff => Ok(gaussian(manifold.dim(), d, t)),
        Ok(_) => Ok(0.0),
        Err(Error::SingularPoint(p)) => Err(Error::SingularPoint(p)),
        Err(_) => Ok(0.0),
    }
}

/// A kernel that can be evaluated at arbitrary point pairs.
pub trait PointKernel: Sync {
    fn manifold(&self) -> &ModelManifold;
    fn fiber(&self) -> usize;
    fn eval(&self, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>>;
}

impl PointKernel for GeneralizedLaplacianSpec {
    fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    fn fiber(&self) -> usize {
        self.connection.fiber()
    }

    /// K_Δ(x,y;t) = H_D·exp(c_R Ric_y(x⃗_y,x⃗_y) + c_S t scal_y)·exp(−tV(x)/2)·pt^y_x
    fn eval(&self, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
        }
        let d = match self.manifold.distance(x, y) {
            Ok(d) => d,
            Err(Error::SingularPoint(p)) => return Err(Error::SingularPoint(p)),
            Err(_) => return Ok(DMatrix::zeros(self.fiber(), self.fiber())),
        };
        let expv = self.half_potential_exp(x, t)?;
        let scal = self.manifold.scalar_curvature(y)?;
        self.block(x, y, d, t, &expv, scal)
    }
}

/// K_Δ(t) sampled on a grid.
pub fn approx_heat_kernel_with(spec: &GeneralizedLaplacianSpec, grid: &Arc<QuadratureGrid>, t: f64, exec: Execution) -> Result<OperatorKernel> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    if grid.dim() != spec.manifold.dim() {
        return Err(Error::Shape(format!("grid dimension {} vs manifold {}", grid.dim(), spec.manifold.dim())));
    }
    let n = spec.fiber();
    let nodes = grid.len();
    let expv: Vec<DMatrix<f64>> = (0..nodes).map(|x| spec.half_potential_exp(grid.node_slice(x), t)).collect::<Result<_>>()?;
    let scal: Vec<f64> = (0..nodes).map(|y| spec.manifold.scalar_curvature(grid.node_slice(y))).collect::<Result<_>>()?;
    let units: Option<(f64, Vec<Vector3<f64>>)> = match &spec.manifold {
        ModelManifold::RoundSphere { radius } => {
            Some((*radius, (0..nodes).map(|i| sphere::unit_point(grid.node_slice(i)[0], grid.node_slice(i)[1])).collect()))
        }
        _ => None,
    };
    let distance = |x: usize, y: usize| -> Result<f64> {
        match &units {
            Some((a, p)) => Ok(a * sphere::angle(&p[x], &p[y])),
            None => match spec.manifold.distance(grid.node_slice(x), grid.node_slice(y)) {
                Ok(d) => Ok(d),
                Err(Error::SingularPoint(p)) => Err(Error::SingularPoint(p)),
                Err(_) => Ok(f64::INFINITY),
            },
        }
    };
    let columns = par::map_indices(nodes, exec, |y| -> Result<DMatrix<f64>> {
        let mut strip = DMatrix::zeros(nodes * n, n);
        for x in 0..nodes {
            let d = distance(x, y)?;
            if d >= spec.cutoff {
                continue;
            }
            let b = spec.block(grid.node_slice(x), grid.node_slice(y), d, t, &expv[x], scal[y])?;
            strip.view_mut((x * n, 0), (n, n)).copy_from(&b);
        }
        Ok(strip)
    });
    let mut data = DMatrix::zeros(nodes * n, nodes * n);
    for (y, strip) in columns.into_iter().enumerate() {
        data.columns_mut(y * n, n).copy_from(&strip?);
    }
    OperatorKernel::new(grid.clone(), t, n, spec.cutoff, data)
}

pub fn approx_heat_kernel(spec: &GeneralizedLaplacianSpec, grid: &Arc<QuadratureGrid>, t: f64) -> Result<OperatorKernel> {
    approx_heat_kernel_with(spec, grid, t, Execution::default())
}

/// t ↦ K_Δ(t) on a fixed grid.
#[derive(Debug, Clone)]
pub struct ApproxHeatFamily {
    pub spec: GeneralizedLaplacianSpec,
    pub grid: Arc<QuadratureGrid>,
    pub exec: Execution,
}

impl ApproxHeatFamily {
    pub fn new(spec: GeneralizedLaplacianSpec, grid: Arc<QuadratureGrid>) -> Self {
        ApproxHeatFamily { spec, grid, exec: Execution::default() }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }
}

impl KernelFamily for ApproxHeatFamily {
    fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    fn fiber(&self) -> usize {
        self.spec.fiber()
    }

    fn kernel(&self, t: f64) -> Result<OperatorKernel> {
        approx_heat_kernel_with(&self.spec, &self.grid, t, self.exec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_gaussian_values() {
        let r2 = ModelManifold::torus(&[100.0, 100.0]);
        let h = h_kernel(&r2, &[0.0, 0.0], &[1.0, 0.0], 0.5, 10.0).unwrap();
        assert!((h - (-1.0f64).exp() / PI).abs() < 1e-15);
        assert!((h - 0.117099).abs() < 1e-6);
        assert_eq!(h_kernel(&r2, &[0.0, 0.0], &[3.0, 0.0], 0.5, 2.0).unwrap(), 0.0);
        let t = 0.3;
        assert!((h_kernel(&r2, &[1.0, 1.0], &[1.0, 1.0], t, 1.0).unwrap() - 1.0 / (2.0 * PI * t)).abs() < 1e-14);
    }

    #[test]
    fn sphere_diagonal_value() {
        let spec = GeneralizedLaplacianSpec::scalar(ModelManifold::sphere(1.0));
        let k = spec.eval(&[1.0, 2.0], &[1.0, 2.0], 0.1).unwrap();
        let expect = (2.0 * PI * 0.1f64).recip() * (0.2f64 / 12.0).exp();
        assert!((k[(0, 0)] - expect).abs() < 1e-13);
        assert!((k[(0, 0)] - 1.61830).abs() < 1e-5);
    }

    #[test]
    fn flat_kernel_is_gaussian() {
        let m = ModelManifold::torus(&[2.0 * PI]);
        let grid = Arc::new(m.quadrature_grid(&[32]).unwrap());
        let spec = GeneralizedLaplacianSpec::scalar(m.clone());
        let k = approx_heat_kernel(&spec, &grid, 0.2).unwrap();
        for (x, y) in [(0, 0), (3, 5), (1, 30), (0, 16)] {
            let h = h_kernel(&m, grid.node_slice(x), grid.node_slice(y), 0.2, spec.cutoff).unwrap();
            assert_eq!(k.block(x, y)[(0, 0)], h);
        }
    }

    #[test]
    fn diagonal_includes_potential() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let spec = GeneralizedLaplacianSpec::new(ModelManifold::sphere(1.0), ConnectionSpec::trivial(2), Potential::Constant(v.clone()));
        let t = 0.2;
        let k = spec.eval(&[1.0, 1.0], &[1.0, 1.0], t).unwrap();
        let expect = (v * (-t / 2.0)).exp() * ((2.0 * PI * t).recip() * (t * 2.0 / 12.0).exp());
        assert!((k - expect).amax() < 1e-13);
    }

    #[test]
    fn grid_matches_pointwise() {
        let m = ModelManifold::sphere(1.0);
        let grid = Arc::new(m.quadrature_grid(&[6, 12]).unwrap());
        let spec = GeneralizedLaplacianSpec::new(m, ConnectionSpec::levi_civita_forms(2), Potential::Zero);
        let k = approx_heat_kernel(&spec, &grid, 0.3).unwrap();
        for (x, y) in [(0, 1), (13, 14), (20, 33)] {
            let p = spec.eval(grid.node_slice(x), grid.node_slice(y), 0.3).unwrap();
            assert!((k.block(x, y) - p).amax() < 1e-12);
        }
    }
}
