use std::sync::Arc;

use serde::Serialize;

use super::{dirac_square_spec, CliffordBundleSpec};
use crate::error::{Error, Result};
use crate::geometry::QuadratureGrid;
use crate::kernels::{partition_product_with, ApproxHeatFamily, OperatorKernel, Partition};
use crate::par::{self, Execution};
use crate::superalgebra::supertrace_scalar;

/// Σ_x w_x Str K(x, x).
pub fn supertrace_integral(kernel: &OperatorKernel, m: usize, n_w: usize) -> Result<f64> {
    if kernel.fiber() != (1 << m) * n_w {
        return Err(Error::UngradedFiber);
    }
    let grid = kernel.grid();
    let terms = par::map_indices(grid.len(), Execution::default(), |x| supertrace_scalar(&kernel.block(x, x), m, n_w).map(|s| s * grid.weight(x)));
    terms.into_iter().sum()
}

/// Supertrace integral of the partition product of the squared-Dirac kernel.
pub fn mckean_singer_index(bundle: &CliffordBundleSpec, grid: &Arc<QuadratureGrid>, t: f64, p: &Partition) -> Result<f64> {
    mckean_singer_index_with(bundle, grid, t, p, Execution::default())
}

pub fn mckean_singer_index_with(bundle: &CliffordBundleSpec, grid: &Arc<QuadratureGrid>, t: f64, p: &Partition, exec: Execution) -> Result<f64> {
    if (p.total() - t).abs() > 1e-12 * t.max(1.0) {
        return Err(Error::InvalidArgument(format!("partition sums to {}, expected {t}", p.total())));
    }
    let family = ApproxHeatFamily::new(dirac_square_spec(bundle)?, grid.clone()).with_execution(exec);
    let k = partition_product_with(&family, p, exec)?;
    supertrace_integral(&k, bundle.dim(), bundle.twist_fiber())
}

/// First-order extrapolation from two successive dyadic depths.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Richardson {
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
    pub error: f64,
}

impl Richardson {
    pub fn from_pair(coarse: f64, fine: f64) -> Self {
        Richardson { coarse, fine, extrapolated: 2.0 * fine - coarse, error: (fine - coarse).abs() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    pub manifold: String,
    pub bundle: String,
    pub t: f64,
    pub partition: String,
    pub index_estimate: f64,
    pub t_sweep: Vec<(f64, f64)>,
    pub richardson: Richardson,
}

impl IndexReport {
    /// max − min over the sweep.
    pub fn sweep_variation(&self) -> f64 {
        let vals = self.t_sweep.iter().map(|p| p.1);
        vals.clone().fold(f64::NEG_INFINITY, f64::max) - vals.fold(f64::INFINITY, f64::min)
    }

    /// Index estimate at t on a dyadic partition of the given depth, with a t-sweep at the same depth.
    pub fn compute(bundle: &CliffordBundleSpec, grid: &Arc<QuadratureGrid>, t: f64, depth: u32, sweep: &[f64], exec: Execution) -> Result<Self> {
        let p = Partition::dyadic(t, depth)?;
        let fine = mckean_singer_index_with(bundle, grid, t, &p, exec)?;
        let coarse = if depth > 0 { mckean_singer_index_with(bundle, grid, t, &Partition::dyadic(t, depth - 1)?, exec)? } else { fine };
        let t_sweep = sweep
            .iter()
            .map(|&s| Ok((s, mckean_singer_index_with(bundle, grid, s, &Partition::dyadic(s, depth)?, exec)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(IndexReport {
            manifold: bundle.manifold().name(),
            bundle: bundle.label(),
            t,
            partition: p.to_string(),
            index_estimate: fine,
            t_sweep,
            richardson: Richardson::from_pair(coarse, fine),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ModelManifold;
    use std::f64::consts::PI;

    #[test]
    fn flat_torus_supertrace_cancels() {
        let m = ModelManifold::torus(&[2.0 * PI, 2.0 * PI]);
        let grid = Arc::new(m.quadrature_grid(&[8, 8]).unwrap());
        let b = CliffordBundleSpec::forms(m).unwrap();
        let idx = mckean_singer_index(&b, &grid, 0.5, &Partition::dyadic(0.5, 2).unwrap()).unwrap();
        assert!(idx.abs() < 1e-12);
    }

    #[test]
    fn ungraded_kernel_is_rejected() {
        let m = ModelManifold::torus(&[1.0, 1.0]);
        let grid = Arc::new(m.quadrature_grid(&[2, 2]).unwrap());
        let k = OperatorKernel::delta(grid, 3, 1.0, 0.1);
        assert!(matches!(supertrace_integral(&k, 2, 1), Err(Error::UngradedFiber)));
    }
}
