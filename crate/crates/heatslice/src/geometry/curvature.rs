use nalgebra::DMatrix;
use serde::Serialize;

/// R_{ijkl} = ⟨R(∂_i, ∂_j)∂_l, ∂_k⟩ with R(X,Y) = [∇_X, ∇_Y] − ∇_{[X,Y]}; positive for the round sphere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Riemann {
    m: usize,
    data: Vec<f64>,
}

impl Riemann {
    pub fn zeros(m: usize) -> Self {
        Riemann { m, data: vec![0.0; m * m * m * m] }
    }

    /// K (g_ik g_jl − g_il g_jk)
    pub fn constant_curvature(g: &DMatrix<f64>, k: f64) -> Self {
        let m = g.nrows();
        let mut r = Riemann::zeros(m);
        for i in 0..m {
            for j in 0..m {
                for a in 0..m {
                    for b in 0..m {
                        r.set(i, j, a, b, k * (g[(i, a)] * g[(j, b)] - g[(i, b)] * g[(j, a)]));
                    }
                }
            }
        }
        r
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    fn at(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.m + j) * self.m + k) * self.m + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.at(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let p = self.at(i, j, k, l);
        self.data[p] = v;
    }

    /// Components in the frame whose vectors are the columns of `e`.
    pub fn in_frame(&self, e: &DMatrix<f64>) -> Riemann {
        let m = self.m;
        let mut cur = self.data.clone();
        // contract one slot at a time
        for slot in 0..4 {
            let mut next = vec![0.0; cur.len()];
            for idx in 0..cur.len() {
                let mut d = [idx / (m * m * m), (idx / (m * m)) % m, (idx / m) % m, idx % m];
                let a = d[slot];
                let mut s = 0.0;
                for p in 0..m {
                    d[slot] = p;
                    let src = ((d[0] * m + d[1]) * m + d[2]) * m + d[3];
                    s += cur[src] * e[(p, a)];
                }
                next[idx] = s;
            }
            cur = next;
        }
        Riemann { m, data: cur }
    }

    pub fn ricci(&self, ginv: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.m;
        DMatrix::from_fn(m, m, |j, l| {
            let mut s = 0.0;
            for i in 0..m {
                for k in 0..m {
                    s += ginv[(i, k)] * self.get(i, j, k, l);
                }
            }
            s
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest violation of the antisymmetries, pair symmetry and first Bianchi identity.
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.m;
        let mut d: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let r = self.get(i, j, k, l);
                        d = d.max((r + self.get(j, i, k, l)).abs());
                        d = d.max((r + self.get(i, j, l, k)).abs());
                        d = d.max((r - self.get(k, l, i, j)).abs());
                        d = d.max((r + self.get(j, k, i, l) + self.get(k, i, j, l)).abs());
                    }
                }
            }
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureData {
    pub metric: DMatrix<f64>,
    pub riemann: Riemann,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
    /// Γ^k_ij stored at index (k·m + i)·m + j.
    pub christoffel: Vec<f64>,
}

impl CurvatureData {
    pub fn from_parts(metric: DMatrix<f64>, riemann: Riemann, christoffel: Vec<f64>) -> Self {
        let ginv = metric.clone().try_inverse().expect("metric is invertible");
        let ricci = riemann.ricci(&ginv);
        let scalar = (&ginv * &ricci).trace();
        CurvatureData { metric, riemann, ricci, scalar, christoffel }
    }

    pub fn dim(&self) -> usize {
        self.metric.nrows()
    }

    pub fn christoffel(&self, k: usize, i: usize, j: usize) -> f64 {
        let m = self.dim();
        self.christoffel[(k * m + i) * m + j]
    }

    /// Ric(v, v)
    pub fn ricci_quadratic(&self, v: &[f64]) -> f64 {
        let m = self.dim();
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += self.ricci[(i, j)] * v[i] * v[j];
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_curvature_symmetries() {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 1.5]);
        let r = Riemann::constant_curvature(&g, 0.7);
        assert!(r.symmetry_defect() < 1e-14);
        let c = CurvatureData::from_parts(g.clone(), r, vec![0.0; 27]);
        // Ric = (m-1) K g, scalar = m(m-1) K
        assert!((&c.ricci - &g * 1.4).amax() < 1e-14);
        assert!((c.scalar - 4.2).abs() < 1e-13);
    }
}
