//! Least-squares line fits used by the convergence and scaling diagnostics.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub correlation: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    LinearFit { slope, intercept: my - slope * mx, correlation: sxy / (sxx * syy).sqrt() }
}

/// Fit log y = p log x + c; the slope is the power p.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let x = [0.1, 0.2, 0.4, 0.8];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        let f = log_log_fit(&x, &y);
        assert!((f.slope - 1.5).abs() < 1e-12);
        assert!((f.correlation - 1.0).abs() < 1e-12);
    }
}
