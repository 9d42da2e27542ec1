use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::family::{action_on_one, clifford_image, phi_r, wedge_action, ChartKernel, LatticeQuadrature, RescaleFamily};
use crate::dirac::{dirac_square_spec, CliffordBundleSpec};
use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LinearFit};
use crate::flatmodel::{k0_kernel, k0_partition_diag, FlatModelData};
use crate::geometry::{parallel_transport, QuadratureGrid};
use crate::kernels::{approx_heat_kernel_with, GeneralizedLaplacianSpec, Partition, PointKernel};
use crate::par::Execution;
use crate::superalgebra::clifford::grading_conjugate;
use crate::superalgebra::blade::{self, Blade};
use crate::superalgebra::SuperElement;

/// The squared-Dirac kernel in normal coordinates at x0, in the radial gauge, as Σ_I c_Λ(e_I) ⊗ B_I.
pub struct DiracChartKernel {
    family: RescaleFamily,
    bundle: CliffordBundleSpec,
    spec: GeneralizedLaplacianSpec,
}

impl DiracChartKernel {
    pub fn new(family: &RescaleFamily, bundle: &CliffordBundleSpec) -> Result<Self> {
        if family.manifold() != bundle.manifold() {
            return Err(Error::InvalidArgument("rescale family and bundle live on different manifolds".into()));
        }
        Ok(DiracChartKernel { family: family.with_scale(1.0)?, bundle: bundle.clone(), spec: dirac_square_spec(bundle)? })
    }

    pub fn spec(&self) -> &GeneralizedLaplacianSpec {
        &self.spec
    }

    fn gauge(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        parallel_transport(self.family.manifold(), &self.spec.connection, self.family.base_point(), p)
    }

    /// U(p)^{-1} K(p, q; t) U(q) on the fibre over x0.
    pub fn eval_fibre(&self, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let p = self.family.point(x)?;
        let q = self.family.point(y)?;
        let up = self.gauge(&p)?;
        let inv = up.clone().try_inverse().ok_or_else(|| Error::InvalidArgument(format!("singular transport at {p:?}")))?;
        Ok(inv * self.spec.eval(&p, &q, t)? * self.gauge(&q)?)
    }

    /// The constant-curvature model at x0 with the full commutant twist.
    pub fn flat_model(&self) -> Result<FlatModelData> {
        let x0 = self.family.base_point();
        let m = self.family.manifold();
        let riemann = m.curvature_at(x0)?.riemann.in_frame(&m.orthonormal_frame(x0)?);
        let twist = self.bundle.twist_curvature(x0)?;
        FlatModelData::from_curvature(&riemann, Some(&twist), self.bundle.fiber())
    }
}

impl ChartKernel for DiracChartKernel {
    fn dim(&self) -> usize {
        self.bundle.dim()
    }

    fn lambda_dim(&self) -> usize {
        self.bundle.dim()
    }

    fn twist_fiber(&self) -> usize {
        self.bundle.fiber()
    }

    fn eval(&self, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>> {
        clifford_image(&self.eval_fibre(x, y, t)?, self.bundle.dim(), self.bundle.twist_fiber())
    }
}

/// Φ_r of the chart kernel at the family's scale.
pub fn kr_kernel(family: &RescaleFamily, bundle: &CliffordBundleSpec, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>> {
    let k = DiracChartKernel::new(family, bundle)?;
    phi_r(&k, family.scale())?.eval(x, y, t)
}

/// max over the wedge action of ‖Φ_r[K_1](x, y; t) − K_0(x, y; t)‖ for each scale.
pub fn kr_defects(kernel: &DiracChartKernel, scales: &[f64], x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
    let k0 = wedge_action(&k0_kernel(&kernel.flat_model()?, x, y, t)?);
    scales.iter().map(|&r| Ok((phi_r(kernel, r)?.eval(x, y, t)? - &k0).amax())).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RPartitionRow {
    pub r: f64,
    pub nodes: usize,
    /// max_I ‖coefficient_I(Φ_r[K_1^{*P}](0,0)) − coefficient_I(K_0^{*P}(0,0))‖
    pub diff: f64,
    pub rel_diff: f64,
    /// (multi-index, difference) for every coefficient.
    pub coeff_diffs: Vec<(String, f64)>,
    /// Gaussian mass of the bridge outside the lattice ball.
    pub tail_bound: f64,
    /// ‖Φ_r[K_1^{*2P}] − Φ_r[K_1^{*P}]‖ at the origin, when requested.
    pub depth_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RPartitionStudy {
    pub t: f64,
    pub slices: usize,
    pub reference: serde_json::Value,
    pub rows: Vec<RPartitionRow>,
    pub fit: LinearFit,
    /// Whether every tail bound stayed below the tolerance.
    pub truncation_ok: bool,
}

impl RPartitionStudy {
    pub fn is_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| (w[0].r > w[1].r) == (w[1].diff < w[0].diff))
    }

    /// Rows (r, coeff_id, |difference|).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["r", "coeff_id", "abs_diff"]).map_err(io)?;
        for row in &self.rows {
            for (id, d) in &row.coeff_diffs {
                out.write_record([row.r.to_string(), id.clone(), d.to_string()]).map_err(io)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Lattice nodes in g_r coordinates with their manifold points and g_1 weights.
struct ScaledLattice {
    grid: Arc<QuadratureGrid>,
    origin: usize,
}

impl ScaledLattice {
    fn new(family: &RescaleFamily, r: f64, quad: &LatticeQuadrature) -> Result<Self> {
        let m = family.dim();
        let fam = family.with_scale(r)?;
        let lattice = quad.nodes(m);
        let origin = lattice.iter().position(|u| u.iter().all(|v| *v == 0.0)).expect("lattice contains the origin");
        let cell = (r * quad.step).powi(m as i32);
        let mut nodes = Vec::with_capacity(lattice.len());
        let mut weights = Vec::with_capacity(lattice.len());
        for u in &lattice {
            let ru: Vec<f64> = u.iter().map(|v| v * r).collect();
            nodes.push(DVector::from_vec(fam.point(&ru)?));
            weights.push(fam.chart().metric(&ru)?.determinant().sqrt() * cell);
        }
        let grid = Arc::new(QuadratureGrid::new(m, nodes, weights, vec![lattice.len()], format!("normal lattice r={r}"))?);
        Ok(ScaledLattice { grid, origin })
    }

    /// Φ_r[K_1^{*P}](0, 0; t) with P equal slices; the radial gauge is trivial at x0.
    fn rescaled_diag(&self, kernel: &DiracChartKernel, r: f64, t: f64, slices: usize, exec: Execution) -> Result<SuperElement> {
        let m = kernel.dim();
        let n = kernel.bundle.fiber();
        let slice = approx_heat_kernel_with(kernel.spec(), &self.grid, r * r * t / slices as f64, exec)?;
        let data = slice.data();
        let mut row = data.rows(self.origin * n, n).clone_owned();
        for _ in 1..slices {
            for (a, w) in self.grid.weights().iter().enumerate() {
                row.columns_mut(a * n, n).scale_mut(*w);
            }
            row = &row * data;
        }
        let diag = row.columns(self.origin * n, n).clone_owned();
        let image = clifford_image(&diag, m, kernel.bundle.twist_fiber())?;
        Ok(action_on_one(&(grading_conjugate(&image, m, n, r)? * r.powi(m as i32)), m))
    }
}

fn coeff_diffs(a: &SuperElement, b: &SuperElement) -> Vec<(String, f64)> {
    let m = a.dim();
    (0..(1 as Blade) << m).map(|i| (blade::label(i, m), (a.coeff(i) - b.coeff(i)).amax())).collect()
}

fn max_diff(a: &SuperElement, b: &SuperElement) -> f64 {
    coeff_diffs(a, b).into_iter().map(|x| x.1).fold(0.0, f64::max)
}

/// Settings of [`r_partition_study`].
#[derive(Debug, Clone)]
pub struct RStudyOptions {
    pub quad: LatticeQuadrature,
    /// Also compare against 2P slices at each r.
    pub depth_check: bool,
    pub tail_tol: f64,
    pub exec: Execution,
}

impl Default for RStudyOptions {
    fn default() -> Self {
        RStudyOptions { quad: LatticeQuadrature { radius: 3.0, step: 0.2 }, depth_check: false, tail_tol: 1e-6, exec: Execution::default() }
    }
}

/// Φ_r[K_1^{*P}](0, 0; t) on a lattice in g_r coordinates, against K_0^{*P}(0, 0; t).
pub fn r_partition_study(
    family: &RescaleFamily,
    bundle: &CliffordBundleSpec,
    t: f64,
    slices: usize,
    scales: &[f64],
    opts: &RStudyOptions,
) -> Result<RPartitionStudy> {
    let kernel = DiracChartKernel::new(family, bundle)?;
    let reference = k0_partition_diag(&kernel.flat_model()?, &Partition::equal(t, slices)?)?;
    let radius = opts.quad.radius - opts.quad.step;
    // each bridge coordinate has variance at most t/4
    let tail_bound = (-radius * radius / (t / 2.0)).exp();
    let rows = scales
        .iter()
        .map(|&r| {
            let lattice = ScaledLattice::new(family, r, &opts.quad)?;
            let value = lattice.rescaled_diag(&kernel, r, t, slices, opts.exec)?;
            let depth_gap = if opts.depth_check {
                Some(max_diff(&lattice.rescaled_diag(&kernel, r, t, 2 * slices, opts.exec)?, &value))
            } else {
                None
            };
            let coeff_diffs = coeff_diffs(&value, &reference);
            let diff = coeff_diffs.iter().map(|x| x.1).fold(0.0, f64::max);
            Ok(RPartitionRow {
                r,
                nodes: lattice.grid.len(),
                diff,
                rel_diff: diff / reference.max_abs(),
                coeff_diffs,
                tail_bound,
                depth_gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = log_log_fit(&rows.iter().map(|x| x.r).collect::<Vec<_>>(), &rows.iter().map(|x| x.diff).collect::<Vec<_>>());
    Ok(RPartitionStudy { t, slices, reference: reference.to_json(), rows, fit, truncation_ok: tail_bound <= opts.tail_tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ModelManifold;
    use std::f64::consts::FRAC_PI_2;

    fn sphere_setup() -> (RescaleFamily, CliffordBundleSpec) {
        let s = ModelManifold::sphere(1.0);
        (RescaleFamily::new(s.clone(), &[FRAC_PI_2, 0.3]).unwrap(), CliffordBundleSpec::forms(s).unwrap())
    }

    #[test]
    fn rescaled_dirac_kernel_tends_to_flat_model() {
        let (fam, bundle) = sphere_setup();
        let k = DiracChartKernel::new(&fam, &bundle).unwrap();
        let scales = [0.4, 0.2, 0.1, 0.05];
        let d = kr_defects(&k, &scales, &[0.3, -0.2], &[-0.1, 0.4], 0.5).unwrap();
        let fit = log_log_fit(&scales, &d);
        assert!(fit.slope >= 0.9, "{d:?}");
        assert!(d[3] < 0.1 * d[0], "{d:?}");
    }

    #[test]
    fn kr_kernel_matches_phi_r() {
        let (fam, bundle) = sphere_setup();
        let fam = fam.with_scale(0.3).unwrap();
        let a = kr_kernel(&fam, &bundle, &[0.2, 0.1], &[0.0, -0.3], 0.4).unwrap();
        let k = DiracChartKernel::new(&fam, &bundle).unwrap();
        let b = phi_r(&k, 0.3).unwrap().eval(&[0.2, 0.1], &[0.0, -0.3], 0.4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_torus_study_is_at_quadrature_floor() {
        let s = ModelManifold::torus(&[20.0, 20.0]);
        let fam = RescaleFamily::new(s.clone(), &[0.0, 0.0]).unwrap();
        let b = CliffordBundleSpec::forms(s).unwrap();
        let opts = RStudyOptions { quad: LatticeQuadrature { radius: 2.5, step: 0.25 }, ..Default::default() };
        let st = r_partition_study(&fam, &b, 1.0, 4, &[0.5, 0.1], &opts).unwrap();
        assert!(st.rows.iter().all(|r| r.diff < 1e-6), "{:?}", st.rows);
    }

    #[test]
    fn chart_domain_is_enforced() {
        let (fam, bundle) = sphere_setup();
        let r = kr_kernel(&fam, &bundle, &[4.0, 0.0], &[0.0, 0.0], 0.4);
        assert!(matches!(r, Err(Error::ChartDomainExceeded { .. })));
    }
}
