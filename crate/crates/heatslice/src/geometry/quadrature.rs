use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};

/// Nodes and weights (weights already carry det^{1/2} g).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureGrid {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    shape: Vec<usize>,
    label: String,
}

impl QuadratureGrid {
    pub fn new(dim: usize, nodes: Vec<DVector<f64>>, weights: Vec<f64>, shape: Vec<usize>, label: impl Into<String>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::Shape(format!("{} nodes but {} weights", nodes.len(), weights.len())));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
        }
        let mut coords = Vec::with_capacity(nodes.len() * dim);
        for n in &nodes {
            if n.len() != dim {
                return Err(Error::Shape("node dimension".into()));
            }
            coords.extend(n.iter());
        }
        Ok(QuadratureGrid { dim, coords, weights, shape, label: label.into() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.node_slice(i))
    }

    pub fn node_slice(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index of the node closest (in chart coordinates) to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        (0..self.len())
            .min_by(|&a, &b| {
                let da: f64 = self.node_slice(a).iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
                let db: f64 = self.node_slice(b).iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
                da.total_cmp(&db)
            })
            .unwrap_or(0)
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    (x.iter().map(|t| a + h * (t + 1.0)).collect(), w.iter().map(|v| v * h).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in [1, 2, 5, 16, 48] {
            let (x, w) = gauss_legendre(n);
            for k in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(a, b)| a.powi(k as i32) * b).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }
}
