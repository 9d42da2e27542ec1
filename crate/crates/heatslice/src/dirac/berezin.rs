use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::parallel_transport;
use crate::kernels::GeneralizedLaplacianSpec;
use crate::superalgebra::blade::{self, Blade};
use crate::superalgebra::clifford::{derivation, exterior_power};
use crate::superalgebra::Form;

/// Grassmann form of one kernel slice on Λ𝒱, for a bundle 𝒱 of rank n.
///
/// Generators are ordered ψ_x (bits 0..n), ψ_y (n..2n), ψ†_y (2n..3n). The exponent is
/// ⟨ψ†_y, Bᵀψ_x − ψ_y⟩ with B = (1 − tV(x)/2)·pt^y_x; the factor i of the action is absorbed
/// into the sign normalization of the Berezin measure.
#[derive(Debug, Clone)]
pub struct SusyKernelForm {
    rank: usize,
    time: f64,
    scalar: f64,
    transport: DMatrix<f64>,
    potential: DMatrix<f64>,
    exponent: Form,
}

fn block(n: usize, slot: usize) -> Blade {
    blade::full(n) << (slot * n)
}

/// Left Berezin integral over the generators in `b`: the coefficient of e^b moved to the front.
fn berezin_over(f: &Form, b: Blade) -> Form {
    let mut out = Form::zero(f.dim());
    for (idx, &v) in f.coeffs().iter().enumerate() {
        let idx = idx as Blade;
        if v == 0.0 || idx & b != b {
            continue;
        }
        let rest = idx & !b;
        let s = blade::wedge_sign(b, rest).expect("disjoint");
        out.set(rest, out.coeff(rest) + s * v);
    }
    out
}

impl SusyKernelForm {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// H_D times the curvature factor.
    pub fn scalar(&self) -> f64 {
        self.scalar
    }

    pub fn transport(&self) -> &DMatrix<f64> {
        &self.transport
    }

    pub fn potential(&self) -> &DMatrix<f64> {
        &self.potential
    }

    pub fn exponent(&self) -> &Form {
        &self.exponent
    }

    /// ∫ exp(exponent) dψ†_y, a form in ψ_x and ψ_y.
    pub fn superkernel(&self) -> Form {
        let n = self.rank;
        let sign = if (n * (n + 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        berezin_over(&self.exponent.exp(), block(n, 2)).scale(sign)
    }

    /// The 2^n×2^n matrix of f(ψ_y) ↦ ∫ K(ψ_x, ψ_y) f(ψ_y) dψ_y in the monomial basis, times the scalar part.
    pub fn integrate(&self) -> DMatrix<f64> {
        let n = self.rank;
        let k = self.superkernel();
        let g = k.dim();
        let dim = 1usize << n;
        let mut out = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let f = Form::basis(g, (i as Blade) << n, 1.0);
            let col = berezin_over(&k.wedge(&f), block(n, 1));
            for j in 0..dim {
                out[(j, i)] = col.coeff(j as Blade);
            }
        }
        out * self.scalar
    }
}

/// The Berezin representation of the kernel slice K(x, y; t) lifted to Λ𝒱.
pub fn berezin_kernel(spec: &GeneralizedLaplacianSpec, x: &[f64], y: &[f64], t: f64) -> Result<SusyKernelForm> {
    let n = spec.fiber();
    if 3 * n > blade::MAX_GENERATORS {
        return Err(Error::InvalidArgument(format!("fiber rank {n} too large for a Grassmann representation")));
    }
    let scalar = spec.scalar_factor(x, y, t)?;
    let transport = parallel_transport(&spec.manifold, &spec.connection, y, x)?;
    let potential = spec.potential_at(x)?;
    let b = (DMatrix::identity(n, n) - &potential * (0.5 * t)) * &transport;
    let g = 3 * n;
    let mut exponent = Form::zero(g);
    for a in 0..n {
        for c in 0..n {
            if b[(c, a)] != 0.0 {
                exponent += &Form::two_form(g, 2 * n + a, c, b[(c, a)]);
            }
        }
        exponent += &Form::two_form(g, 2 * n + a, n + a, -1.0);
    }
    Ok(SusyKernelForm { rank: n, time: t, scalar, transport, potential, exponent })
}

/// The same slice as a matrix on Λ𝒱: scalar·exp(−t·V^Λ/2)·Λ(pt^y_x), with V^Λ the derivation extension.
pub fn exterior_matrix_kernel(spec: &GeneralizedLaplacianSpec, x: &[f64], y: &[f64], t: f64) -> Result<DMatrix<f64>> {
    let scalar = spec.scalar_factor(x, y, t)?;
    let transport = parallel_transport(&spec.manifold, &spec.connection, y, x)?;
    let v = derivation(&spec.potential_at(x)?);
    Ok((v * (-0.5 * t)).exp() * exterior_power(&transport) * scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::{dirac_square_spec, CliffordBundleSpec};
    use crate::fit::log_log_fit;
    use crate::geometry::{ConnectionSpec, ModelManifold};
    use crate::kernels::Potential;
    use std::f64::consts::PI;

    #[test]
    fn delta_form_reproduces_exterior_power() {
        let spec = GeneralizedLaplacianSpec::new(
            ModelManifold::torus(&[2.0 * PI; 2]),
            ConnectionSpec::trivial(3),
            Potential::Constant(DMatrix::from_row_slice(3, 3, &[0.3, -1.1, 0.4, 0.2, 0.7, -0.5, 1.3, 0.1, -0.2])),
        );
        let t = 0.8;
        let k = berezin_kernel(&spec, &[0.3, 0.1], &[0.5, 0.6], t).unwrap();
        let b = DMatrix::identity(3, 3) - k.potential() * (0.5 * t);
        let expect = exterior_power(&b) * k.scalar();
        assert!((k.integrate() - expect).amax() < 1e-14);
    }

    #[test]
    fn zero_potential_is_exact() {
        let spec = GeneralizedLaplacianSpec::new(ModelManifold::sphere(1.0), ConnectionSpec::levi_civita_frame(2), Potential::Zero);
        let (x, y) = ([1.0, 0.4], [1.3, 0.9]);
        let b = berezin_kernel(&spec, &x, &y, 0.3).unwrap().integrate();
        let m = exterior_matrix_kernel(&spec, &x, &y, 0.3).unwrap();
        assert!((b - m).amax() < 1e-12);
    }

    #[test]
    fn diagonal_tends_to_flat_gaussian() {
        let spec = GeneralizedLaplacianSpec::new(ModelManifold::sphere(1.0), ConnectionSpec::levi_civita_frame(2), Potential::Zero);
        let t = 1e-6;
        let b = berezin_kernel(&spec, &[1.0, 0.4], &[1.0, 0.4], t).unwrap().integrate();
        let expect = DMatrix::<f64>::identity(4, 4) / (2.0 * PI * t);
        assert!(((b - &expect) / expect[(0, 0)]).amax() < 1e-5);
    }

    #[test]
    fn dirac_slice_defect_is_second_order() {
        let bundle = CliffordBundleSpec::forms(ModelManifold::sphere(1.0)).unwrap();
        let spec = dirac_square_spec(&bundle).unwrap();
        let (x, y) = ([1.2, 0.5], [1.35, 0.7]);
        let ts = [0.4, 0.2, 0.1, 0.05];
        let defects: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let b = berezin_kernel(&spec, &x, &y, t).unwrap().integrate();
                let m = exterior_matrix_kernel(&spec, &x, &y, t).unwrap();
                (b - &m).amax() / m.amax()
            })
            .collect();
        assert!(log_log_fit(&ts, &defects).slope >= 1.8, "{defects:?}");
    }
}
