use std::sync::Arc;

use nalgebra::DMatrix;

use super::{AnalyticChart, ModelManifold};
use crate::error::{Error, Result};
use crate::superalgebra::clifford::{derivation, exterior_power};

/// A_i(x) for i = 1..m, each n×n; covariant derivative ∇_i = ∂_i + A_i.
pub type ConnectionForm = Arc<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;

#[derive(Clone)]
pub enum ConnectionKind {
    Trivial,
    /// Levi-Civita on the orthonormal tangent frame.
    LeviCivitaFrame,
    /// Levi-Civita induced on Λ T*M in the orthonormal coframe.
    LeviCivitaForms,
    OneForm(ConnectionForm),
    Product(Box<ConnectionSpec>, Box<ConnectionSpec>),
}

#[derive(Clone)]
pub struct ConnectionSpec {
    fiber: usize,
    kind: ConnectionKind,
}

impl std::fmt::Debug for ConnectionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            ConnectionKind::Trivial => "trivial".to_string(),
            ConnectionKind::LeviCivitaFrame => "levi-civita frame".to_string(),
            ConnectionKind::LeviCivitaForms => "levi-civita forms".to_string(),
            ConnectionKind::OneForm(_) => "one-form".to_string(),
            ConnectionKind::Product(a, b) => format!("{a:?} ⊗ {b:?}"),
        };
        write!(f, "ConnectionSpec({kind}, n={})", self.fiber)
    }
}

impl ConnectionSpec {
    pub fn trivial(n: usize) -> Self {
        ConnectionSpec { fiber: n, kind: ConnectionKind::Trivial }
    }

    pub fn levi_civita_frame(m: usize) -> Self {
        ConnectionSpec { fiber: m, kind: ConnectionKind::LeviCivitaFrame }
    }

    pub fn levi_civita_forms(m: usize) -> Self {
        ConnectionSpec { fiber: 1 << m, kind: ConnectionKind::LeviCivitaForms }
    }

    pub fn one_form(n: usize, a: ConnectionForm) -> Self {
        ConnectionSpec { fiber: n, kind: ConnectionKind::OneForm(a) }
    }

    pub fn product(a: ConnectionSpec, b: ConnectionSpec) -> Self {
        ConnectionSpec { fiber: a.fiber * b.fiber, kind: ConnectionKind::Product(Box::new(a), Box::new(b)) }
    }

    pub fn fiber(&self) -> usize {
        self.fiber
    }

    pub fn kind(&self) -> &ConnectionKind {
        &self.kind
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self.kind, ConnectionKind::Trivial)
    }

    pub fn is_levi_civita(&self) -> bool {
        matches!(self.kind, ConnectionKind::LeviCivitaFrame | ConnectionKind::LeviCivitaForms)
    }

    /// A_i(x) in the bundle's trivialization.
    pub fn connection_form(&self, manifold: &ModelManifold, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let m = manifold.dim();
        match &self.kind {
            ConnectionKind::Trivial => Ok(vec![DMatrix::zeros(self.fiber, self.fiber); m]),
            ConnectionKind::LeviCivitaFrame => frame_connection_form(manifold, x),
            ConnectionKind::LeviCivitaForms => Ok(frame_connection_form(manifold, x)?.iter().map(derivation).collect()),
            ConnectionKind::OneForm(a) => Ok(a(x)),
            ConnectionKind::Product(a, b) => {
                let fa = a.connection_form(manifold, x)?;
                let fb = b.connection_form(manifold, x)?;
                let ia = DMatrix::<f64>::identity(a.fiber, a.fiber);
                let ib = DMatrix::<f64>::identity(b.fiber, b.fiber);
                Ok(fa.iter().zip(&fb).map(|(p, q)| p.kronecker(&ib) + ia.kronecker(q)).collect())
            }
        }
    }
}

/// Levi-Civita connection matrices ω_i in the manifold's orthonormal frame.
pub fn frame_connection_form(manifold: &ModelManifold, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let m = manifold.dim();
    match manifold {
        ModelManifold::FlatTorus { .. } => Ok(vec![DMatrix::zeros(m, m); m]),
        ModelManifold::RoundSphere { .. } => {
            let c = x[0].cos();
            Ok(vec![DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 2, &[0.0, -c, c, 0.0])])
        }
        ModelManifold::CustomChart(chart) if matches!(chart.analytic(), Some(AnalyticChart::Euclidean)) => Ok(vec![DMatrix::zeros(m, m); m]),
        ModelManifold::CustomChart(_) => {
            // ω_i = E^{-1}(∂_i E + Γ_i E), (Γ_i)^k_j = Γ^k_ij
            let e = manifold.orthonormal_frame(x)?;
            let einv = e.clone().try_inverse().ok_or_else(|| Error::NotPositiveDefinite(x.to_vec()))?;
            let curv = manifold.curvature_at(x)?;
            let h = 1e-5;
            (0..m)
                .map(|i| {
                    let mut xp = x.to_vec();
                    xp[i] += h;
                    let mut xm = x.to_vec();
                    xm[i] -= h;
                    let de = (manifold.orthonormal_frame(&xp)? - manifold.orthonormal_frame(&xm)?) / (2.0 * h);
                    let gi = DMatrix::from_fn(m, m, |k, j| curv.christoffel(k, i, j));
                    Ok(&einv * (de + gi * &e))
                })
                .collect()
        }
    }
}

const TRANSPORT_STEPS: usize = 64;

/// pt^y_x: parallel transport from the fiber at y to the fiber at x along the minimal geodesic.
pub fn parallel_transport(manifold: &ModelManifold, conn: &ConnectionSpec, y: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
    match &conn.kind {
        ConnectionKind::Trivial => Ok(DMatrix::identity(conn.fiber, conn.fiber)),
        ConnectionKind::LeviCivitaFrame => manifold.frame_transport(y, x),
        ConnectionKind::LeviCivitaForms => Ok(exterior_power(&manifold.frame_transport(y, x)?)),
        ConnectionKind::OneForm(a) => {
            let v = manifold.log(y, x)?;
            let n = conn.fiber;
            let h = 1.0 / TRANSPORT_STEPS as f64;
            let gen = |s: f64| -> Result<DMatrix<f64>> {
                let (p, w) = manifold.geodesic(y, v.as_slice(), s)?;
                let forms = a(p.as_slice());
                let mut out = DMatrix::zeros(n, n);
                for (ai, wi) in forms.iter().zip(w.iter()) {
                    out -= ai * *wi;
                }
                Ok(out)
            };
            let mut u = DMatrix::identity(n, n);
            for k in 0..TRANSPORT_STEPS {
                let s = k as f64 * h;
                let g0 = gen(s)?;
                let gm = gen(s + 0.5 * h)?;
                let g1 = gen(s + h)?;
                let k1 = &g0 * &u;
                let k2 = &gm * (&u + &k1 * (0.5 * h));
                let k3 = &gm * (&u + &k2 * (0.5 * h));
                let k4 = &g1 * (&u + &k3 * h);
                u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
            Ok(u)
        }
        ConnectionKind::Product(a, b) => Ok(parallel_transport(manifold, a, y, x)?.kronecker(&parallel_transport(manifold, b, y, x)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ode_transport_matches_closed_form_on_sphere() {
        let s = ModelManifold::sphere(1.0);
        let lc = ConnectionSpec::levi_civita_frame(2);
        let sphere = s.clone();
        let form: ConnectionForm = Arc::new(move |x| frame_connection_form(&sphere, x).unwrap());
        let ode = ConnectionSpec::one_form(2, form);
        let y = [0.8, 0.3];
        let x = [1.7, 1.4];
        let a = parallel_transport(&s, &lc, &y, &x).unwrap();
        let b = parallel_transport(&s, &ode, &y, &x).unwrap();
        assert!((a - b).amax() < 1e-8);
    }

    #[test]
    fn flat_transport_is_identity() {
        let t = ModelManifold::torus(&[2.0 * PI, 2.0 * PI]);
        for c in [ConnectionSpec::trivial(3), ConnectionSpec::levi_civita_forms(2)] {
            let p = parallel_transport(&t, &c, &[0.1, 0.2], &[1.0, 2.0]).unwrap();
            assert!((p.clone() - DMatrix::identity(p.nrows(), p.ncols())).amax() == 0.0);
        }
    }
}
