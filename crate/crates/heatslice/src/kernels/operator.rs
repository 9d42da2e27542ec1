use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::QuadratureGrid;
use crate::par::{self, Execution};

/// Kernel sampled on a quadrature grid; block (x, y) ∈ Hom(fiber_y, fiber_x) sits at rows x·n.., cols y·n...
#[derive(Debug, Clone)]
pub struct OperatorKernel {
    grid: Arc<QuadratureGrid>,
    time: f64,
    fiber: usize,
    cutoff: f64,
    data: DMatrix<f64>,
}

#[derive(Debug, Serialize)]
struct KernelMetadata<'a> {
    manifold: &'a str,
    t: f64,
    grid_shape: &'a [usize],
    nodes: usize,
    cutoff: f64,
    fiber: usize,
    layout: &'static str,
}

fn same_grid(a: &Arc<QuadratureGrid>, b: &Arc<QuadratureGrid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl OperatorKernel {
    pub fn new(grid: Arc<QuadratureGrid>, time: f64, fiber: usize, cutoff: f64, data: DMatrix<f64>) -> Result<Self> {
        let n = grid.len() * fiber;
        if data.shape() != (n, n) {
            return Err(Error::Shape(format!("kernel data {:?} but grid needs {n}×{n}", data.shape())));
        }
        if !(time > 0.0) {
            return Err(Error::InvalidArgument(format!("kernel time must be positive, got {time}")));
        }
        Ok(OperatorKernel { grid, time, fiber, cutoff, data })
    }

    /// Quadrature identity: blocks w_y^{-1}·Id on the diagonal.
    pub fn delta(grid: Arc<QuadratureGrid>, fiber: usize, cutoff: f64, time: f64) -> Self {
        let n = grid.len() * fiber;
        let mut data = DMatrix::zeros(n, n);
        for x in 0..grid.len() {
            for a in 0..fiber {
                data[(x * fiber + a, x * fiber + a)] = 1.0 / grid.weight(x);
            }
        }
        OperatorKernel { grid, time, fiber, cutoff, data }
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn fiber(&self) -> usize {
        self.fiber
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn block(&self, x: usize, y: usize) -> DMatrix<f64> {
        let n = self.fiber;
        self.data.view((x * n, y * n), (n, n)).clone_owned()
    }

    fn block_norm(&self, x: usize, y: usize) -> f64 {
        let n = self.fiber;
        self.data.view((x * n, y * n), (n, n)).norm()
    }

    /// max_{x,y} |K(x,y)| with the Frobenius norm on blocks.
    pub fn sup_norm(&self) -> f64 {
        if self.fiber == 1 {
            return self.data.amax();
        }
        let n = self.grid.len();
        (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).map(|(x, y)| self.block_norm(x, y)).fold(0.0, f64::max)
    }

    /// max_x Σ_y w_y |K(x,y)|
    pub fn op_norm(&self) -> f64 {
        let n = self.grid.len();
        (0..n)
            .map(|x| (0..n).map(|y| self.grid.weight(y) * self.block_norm(x, y)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> Vec<DMatrix<f64>> {
        (0..self.grid.len()).map(|x| self.block(x, x)).collect()
    }

    /// Pointwise difference; both kernels must share grid and fiber.
    pub fn difference(&self, o: &OperatorKernel) -> Result<OperatorKernel> {
        self.check_compatible(o)?;
        Ok(OperatorKernel { data: &self.data - &o.data, ..self.clone() })
    }

    /// K(y,x)^T arranged as a kernel.
    pub fn adjoint(&self) -> OperatorKernel {
        OperatorKernel { data: self.data.transpose(), ..self.clone() }
    }

    fn check_compatible(&self, o: &OperatorKernel) -> Result<()> {
        if !same_grid(&self.grid, &o.grid) {
            return Err(Error::GridMismatch);
        }
        if self.fiber != o.fiber {
            return Err(Error::Shape(format!("fiber {} vs {}", self.fiber, o.fiber)));
        }
        if self.cutoff != o.cutoff {
            return Err(Error::CutoffMismatch(self.cutoff, o.cutoff));
        }
        Ok(())
    }

    /// Rows of the data scaled by the node weights, i.e. diag(w ⊗ 1_n)·K.
    fn weighted_rows(&self) -> DMatrix<f64> {
        let mut k = self.data.clone();
        let n = self.fiber;
        for (r, mut row) in k.row_iter_mut().enumerate() {
            row *= self.grid.weight(r / n);
        }
        k
    }

    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = KernelMetadata {
            manifold: self.grid.label(),
            t: self.time,
            grid_shape: self.grid.shape(),
            nodes: self.grid.len(),
            cutoff: self.cutoff,
            fiber: self.fiber,
            layout: "row-major f64 little-endian, row = x*n + a, col = y*n + b",
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.bin")))?);
        for r in 0..self.data.nrows() {
            for c in 0..self.data.ncols() {
                f.write_all(&self.data[(r, c)].to_le_bytes())?;
            }
        }
        Ok(())
    }
}

const MIN_COLUMN_BLOCK: usize = 64;

/// (J∗K)(x,z) = Σ_y w_y J(x,y) K(y,z); blocked over output columns.
pub fn star_product_with(j: &OperatorKernel, k: &OperatorKernel, exec: Execution) -> Result<OperatorKernel> {
    j.check_compatible(k)?;
    let kw = k.weighted_rows();
    let n = kw.ncols();
    let data = if exec.is_parallel() && n >= 2 * MIN_COLUMN_BLOCK {
        let threads = current_threads();
        let width = (n.div_ceil(4 * threads)).max(MIN_COLUMN_BLOCK);
        let starts: Vec<usize> = (0..n).step_by(width).collect();
        let blocks = par::map_indices(starts.len(), exec, |b| {
            let c0 = starts[b];
            let w = width.min(n - c0);
            &j.data * kw.columns(c0, w)
        });
        let mut out = DMatrix::zeros(j.data.nrows(), n);
        for (b, blk) in blocks.into_iter().enumerate() {
            out.columns_mut(starts[b], blk.ncols()).copy_from(&blk);
        }
        out
    } else {
        &j.data * kw
    };
    Ok(OperatorKernel { grid: j.grid.clone(), time: j.time + k.time, fiber: j.fiber, cutoff: j.cutoff, data })
}

pub fn star_product(j: &OperatorKernel, k: &OperatorKernel) -> Result<OperatorKernel> {
    star_product_with(j, k, Execution::default())
}

fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// (K∗f)(x) = Σ_y w_y K(x,y) f(y); f has one row per (node, fiber) pair and any number of columns.
pub fn apply_kernel(k: &OperatorKernel, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if f.nrows() != k.data.nrows() {
        return Err(Error::Shape(format!("section has {} rows, kernel needs {}", f.nrows(), k.data.nrows())));
    }
    let mut fw = f.clone();
    let n = k.fiber;
    for (r, mut row) in fw.row_iter_mut().enumerate() {
        row *= k.grid.weight(r / n);
    }
    Ok(&k.data * fw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ModelManifold;
    use rand::{Rng, SeedableRng};

    fn random_kernel(grid: &Arc<QuadratureGrid>, n: usize, seed: u64) -> OperatorKernel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = grid.len() * n;
        let data = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        OperatorKernel::new(grid.clone(), 0.1, n, 1.0, data).unwrap()
    }

    fn grid() -> Arc<QuadratureGrid> {
        Arc::new(ModelManifold::torus(&[1.0, 2.0]).quadrature_grid(&[5, 7]).unwrap())
    }

    #[test]
    fn delta_is_identity() {
        let g = grid();
        let k = random_kernel(&g, 2, 1);
        let d = OperatorKernel::delta(g, 2, 1.0, 0.1);
        let p = star_product(&d, &k).unwrap();
        assert!((p.data() - k.data()).amax() < 1e-14);
    }

    #[test]
    fn associativity() {
        let g = grid();
        let (a, b, c) = (random_kernel(&g, 2, 1), random_kernel(&g, 2, 2), random_kernel(&g, 2, 3));
        let l = star_product(&star_product(&a, &b).unwrap(), &c).unwrap();
        let r = star_product(&a, &star_product(&b, &c).unwrap()).unwrap();
        assert!(l.difference(&r).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn parallel_matches_sequential() {
        let g = Arc::new(ModelManifold::torus(&[1.0]).quadrature_grid(&[300]).unwrap());
        let (a, b) = (random_kernel(&g, 1, 4), random_kernel(&g, 1, 5));
        let p = star_product_with(&a, &b, Execution::Parallel).unwrap();
        let s = star_product_with(&a, &b, Execution::Sequential).unwrap();
        assert!(p.difference(&s).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn op_norm_submultiplicative() {
        let g = grid();
        let (a, b) = (random_kernel(&g, 2, 6), random_kernel(&g, 2, 7));
        let p = star_product(&a, &b).unwrap();
        assert!(p.op_norm() <= a.op_norm() * b.op_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn mismatches_rejected() {
        let g = grid();
        let a = random_kernel(&g, 1, 1);
        let other = Arc::new(ModelManifold::torus(&[1.0, 2.0]).quadrature_grid(&[7, 5]).unwrap());
        assert!(matches!(star_product(&a, &random_kernel(&other, 1, 2)), Err(Error::GridMismatch)));
        let mut c = random_kernel(&g, 1, 3);
        c.cutoff = 0.5;
        assert!(matches!(star_product(&a, &c), Err(Error::CutoffMismatch(..))));
    }

    #[test]
    fn delta_apply_returns_section() {
        let g = grid();
        let d = OperatorKernel::delta(g.clone(), 1, 1.0, 0.1);
        let f = DMatrix::from_fn(g.len(), 1, |i, _| (i as f64).sin());
        assert!((apply_kernel(&d, &f).unwrap() - &f).amax() < 1e-14);
    }
}
