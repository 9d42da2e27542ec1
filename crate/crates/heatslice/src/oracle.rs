//! Independent reference values: periodized Gaussians, the spherical-harmonic heat trace
//! and Euler characteristics.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{ModelManifold, QuadratureGrid};
use crate::kernels::{KernelFamily, OperatorKernel};

/// Heat kernel of the flat torus ℝ^m/⊕Lℤ by the image sum, truncated when the images fall below 1e-18.
pub fn periodic_gaussian(periods: &[f64], x: &[f64], y: &[f64], t: f64) -> f64 {
    periods
        .iter()
        .zip(x.iter().zip(y))
        .map(|(l, (a, b))| {
            let d = (a - b).rem_euclid(*l);
            let span = ((2.0 * t * 41.5).sqrt() / l).ceil() as i64 + 1;
            let s: f64 = (-span..=span).map(|k| (-(d + k as f64 * l).powi(2) / (2.0 * t)).exp()).sum();
            s / (2.0 * PI * t).sqrt()
        })
        .product()
}

/// The exact flat-torus heat kernel sampled on a grid.
#[derive(Debug, Clone)]
pub struct PeriodicHeatFamily {
    periods: Vec<f64>,
    grid: Arc<QuadratureGrid>,
}

impl PeriodicHeatFamily {
    pub fn new(manifold: &ModelManifold, grid: Arc<QuadratureGrid>) -> Result<Self> {
        match manifold {
            ModelManifold::FlatTorus { periods } => Ok(PeriodicHeatFamily { periods: periods.clone(), grid }),
            m => Err(Error::InvalidArgument(format!("image sums need a flat torus, got {}", m.name()))),
        }
    }
}

impl KernelFamily for PeriodicHeatFamily {
    fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    fn fiber(&self) -> usize {
        1
    }

    fn kernel(&self, t: f64) -> Result<OperatorKernel> {
        let n = self.grid.len();
        let data = DMatrix::from_fn(n, n, |i, j| periodic_gaussian(&self.periods, self.grid.node_slice(i), self.grid.node_slice(j), t));
        OperatorKernel::new(self.grid.clone(), t, 1, f64::INFINITY, data)
    }
}

/// Σ_l (2l+1)e^{−l(l+1)t/2a²}/(4πa²), the diagonal of the heat kernel of ½Δ on the sphere of radius a.
pub fn sphere_heat_diagonal(radius: f64, t: f64) -> f64 {
    let mut sum = 0.0;
    for l in 0.. {
        let lf = l as f64;
        let term = (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * t / (2.0 * radius * radius)).exp();
        sum += term;
        if l > 2 && term < 1e-17 * sum {
            break;
        }
    }
    sum / (4.0 * PI * radius * radius)
}

/// χ of the model manifold: 2 for a sphere, 0 for a torus.
pub fn euler_characteristic(manifold: &ModelManifold) -> Option<f64> {
    match manifold {
        ModelManifold::RoundSphere { .. } => Some(2.0),
        ModelManifold::FlatTorus { periods } if periods.len() % 2 == 0 => Some(0.0),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_series_value() {
        let e = |x: f64| x.exp();
        let hand = (1.0 + 3.0 * e(-1.0) + 5.0 * e(-3.0) + 7.0 * e(-6.0) + 9.0 * e(-10.0) + 11.0 * e(-15.0) + 13.0 * e(-21.0)) / (4.0 * PI);
        assert!((sphere_heat_diagonal(1.0, 1.0) - hand).abs() < 1e-9);
        assert!((sphere_heat_diagonal(2.0, 4.0) * 4.0 - hand).abs() < 1e-12);
    }

    #[test]
    fn image_sum_is_a_semigroup_in_one_dimension() {
        // Chapman–Kolmogorov by a fine trapezoid rule, spectrally accurate for periodic integrands
        let l = 2.0 * PI;
        let n = 400;
        let h = l / n as f64;
        let (x, y) = (0.3, 4.0);
        let conv: f64 = (0..n).map(|k| periodic_gaussian(&[l], &[x], &[k as f64 * h], 0.4) * periodic_gaussian(&[l], &[k as f64 * h], &[y], 0.7) * h).sum();
        assert!((conv - periodic_gaussian(&[l], &[x], &[y], 1.1)).abs() < 1e-14);
    }

    #[test]
    fn image_sum_integrates_to_one() {
        let l = 3.0;
        let n = 200;
        let h = l / n as f64;
        let s: f64 = (0..n).map(|k| periodic_gaussian(&[l], &[0.0], &[k as f64 * h], 2.0) * h).sum();
        assert!((s - 1.0).abs() < 1e-13);
    }
}
