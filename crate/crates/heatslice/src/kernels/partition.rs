use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::log_log_fit;
use crate::geometry::QuadratureGrid;
use crate::par::Execution;

use super::operator::{star_product_with, OperatorKernel};

/// A time-indexed kernel family t ↦ K(t) on a fixed grid.
pub trait KernelFamily: Sync {
    fn grid(&self) -> &Arc<QuadratureGrid>;
    fn fiber(&self) -> usize;
    fn kernel(&self, t: f64) -> Result<OperatorKernel>;
}

/// Ordered slice durations of a total time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    durations: Vec<f64>,
}

impl Partition {
    pub fn new(durations: Vec<f64>) -> Result<Self> {
        if durations.is_empty() || durations.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument(format!("partition durations must be positive: {durations:?}")));
        }
        Ok(Partition { durations })
    }

    pub fn single(t: f64) -> Result<Self> {
        Self::new(vec![t])
    }

    pub fn equal(t: f64, slices: usize) -> Result<Self> {
        if slices == 0 {
            return Err(Error::InvalidArgument("partition needs at least one slice".into()));
        }
        Self::new(vec![t / slices as f64; slices])
    }

    pub fn dyadic(t: f64, depth: u32) -> Result<Self> {
        Self::equal(t, 1usize << depth)
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn total(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// |P|, the longest slice.
    pub fn mesh(&self) -> f64 {
        self.durations.iter().cloned().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    /// Every slice cut in half.
    pub fn halved(&self) -> Self {
        Partition { durations: self.durations.iter().flat_map(|d| [d / 2.0, d / 2.0]).collect() }
    }

    pub fn concat(&self, o: &Partition) -> Self {
        Partition { durations: self.durations.iter().chain(&o.durations).cloned().collect() }
    }

    fn is_uniform(&self) -> bool {
        let d0 = self.durations[0];
        self.durations.iter().all(|d| *d == d0)
    }

    /// True when `self` is a concatenation of partitions of the entries of `coarse`.
    pub fn refines(&self, coarse: &Partition) -> bool {
        let tol = 1e-12 * coarse.total().max(self.total());
        if (self.total() - coarse.total()).abs() > tol {
            return false;
        }
        let mut acc = 0.0;
        let fine: Vec<f64> = self.durations.iter().map(|d| { acc += d; acc }).collect();
        let mut acc = 0.0;
        coarse.durations.iter().all(|d| {
            acc += d;
            fine.iter().any(|f| (f - acc).abs() <= tol)
        })
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_uniform() {
            write!(f, "{}×{}", self.len(), self.durations[0])
        } else {
            write!(f, "{:?}", self.durations)
        }
    }
}

fn power(k: &OperatorKernel, mut e: usize, exec: Execution) -> Result<OperatorKernel> {
    let mut base = k.clone();
    let mut acc: Option<OperatorKernel> = None;
    loop {
        if e & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => star_product_with(&a, &base, exec)?,
            });
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        base = star_product_with(&base, &base, exec)?;
    }
    Ok(acc.expect("nonzero exponent"))
}

/// K^{*P}: K(t₁)∗…∗K(t_k). Equal slices are combined by repeated squaring.
pub fn partition_product_with<F: KernelFamily + ?Sized>(family: &F, p: &Partition, exec: Execution) -> Result<OperatorKernel> {
    if p.is_uniform() {
        let k = family.kernel(p.durations[0])?;
        return power(&k, p.len(), exec);
    }
    let mut cache: HashMap<u64, OperatorKernel> = HashMap::new();
    let mut acc: Option<OperatorKernel> = None;
    for &d in &p.durations {
        let k = match cache.get(&d.to_bits()) {
            Some(k) => k.clone(),
            None => {
                let k = family.kernel(d)?;
                cache.insert(d.to_bits(), k.clone());
                k
            }
        };
        acc = Some(match acc {
            None => k,
            Some(a) => star_product_with(&a, &k, exec)?,
        });
    }
    Ok(acc.expect("nonempty partition"))
}

pub fn partition_product<F: KernelFamily + ?Sized>(family: &F, p: &Partition) -> Result<OperatorKernel> {
    partition_product_with(family, p, Execution::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineSchedule {
    pub start_depth: u32,
    pub max_depth: u32,
    /// Stop once successive sup-norm differences fall below this.
    pub tol: f64,
}

impl Default for RefineSchedule {
    fn default() -> Self {
        RefineSchedule { start_depth: 0, max_depth: 6, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub depth: u32,
    pub mesh: f64,
    pub sup_diff: f64,
    pub op_diff: f64,
    /// Local order log₂(d_{k−1}/d_k); NaN on the first row.
    pub fitted_order: f64,
}

/// Successive differences ‖K^{*2P} − K^{*P}‖ along a dyadic refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn sup_diffs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sup_diff).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_diff < w[0].sup_diff)
    }

    /// Least-squares order of sup_diff in |P| over all rows.
    pub fn fitted_order(&self) -> f64 {
        let rows: Vec<&ConvergenceRow> = self.rows.iter().filter(|r| r.sup_diff > 0.0).collect();
        if rows.len() < 2 {
            return f64::NAN;
        }
        let x: Vec<f64> = rows.iter().map(|r| r.mesh).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.sup_diff).collect();
        log_log_fit(&x, &y).slope
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["depth", "|P|", "sup_diff", "op_diff", "fitted_order"]).map_err(io)?;
        for r in &self.rows {
            out.write_record([
                r.depth.to_string(),
                format!("{:e}", r.mesh),
                format!("{:e}", r.sup_diff),
                format!("{:e}", r.op_diff),
                format!("{}", r.fitted_order),
            ])
            .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>5} {:>12} {:>12} {:>12} {:>8}", "depth", "|P|", "sup_diff", "op_diff", "order")?;
        for r in &self.rows {
            writeln!(f, "{:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.3}", r.depth, r.mesh, r.sup_diff, r.op_diff, r.fitted_order)?;
        }
        Ok(())
    }
}

/// Iterate dyadic partitions of t until successive differences drop below the tolerance.
/// A difference that fails to decrease is reported as divergence.
pub fn refine_to_limit_with<F: KernelFamily + ?Sized>(
    family: &F,
    t: f64,
    schedule: RefineSchedule,
    exec: Execution,
) -> Result<(OperatorKernel, ConvergenceTable)> {
    let mut prev = partition_product_with(family, &Partition::dyadic(t, schedule.start_depth)?, exec)?;
    let mut table = ConvergenceTable::default();
    for depth in schedule.start_depth + 1..=schedule.max_depth {
        let p = Partition::dyadic(t, depth)?;
        let cur = partition_product_with(family, &p, exec)?;
        let diff = cur.difference(&prev)?;
        let (sup, op) = (diff.sup_norm(), diff.op_norm());
        let order = table.rows.last().map_or(f64::NAN, |r| (r.sup_diff / sup).log2());
        let increased = table.rows.last().is_some_and(|r| sup >= r.sup_diff);
        table.rows.push(ConvergenceRow { depth, mesh: p.mesh(), sup_diff: sup, op_diff: op, fitted_order: order });
        prev = cur;
        if sup < schedule.tol {
            break;
        }
        if increased {
            return Err(Error::Divergence(table));
        }
    }
    Ok((prev, table))
}

pub fn refine_to_limit<F: KernelFamily + ?Sized>(family: &F, t: f64, schedule: RefineSchedule) -> Result<(OperatorKernel, ConvergenceTable)> {
    refine_to_limit_with(family, t, schedule, Execution::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn refinement_relation() {
        let p = Partition::new(vec![0.5, 0.5]).unwrap();
        let q = Partition::new(vec![0.25, 0.25, 0.1, 0.4]).unwrap();
        assert!(q.refines(&p));
        assert!(!Partition::new(vec![0.3, 0.7]).unwrap().refines(&p));
        assert!(p.halved().refines(&p));
        assert_eq!(Partition::dyadic(1.0, 3).unwrap().len(), 8);
        assert!(Partition::new(vec![0.1, -0.1]).is_err());
    }

    proptest! {
        #[test]
        fn halving_refines(d in proptest::collection::vec(0.01f64..1.0, 1..6)) {
            let p = Partition::new(d).unwrap();
            let h = p.halved();
            prop_assert!(h.refines(&p));
            prop_assert!((h.mesh() - p.mesh() / 2.0).abs() < 1e-15);
            prop_assert!((h.total() - p.total()).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_columns() {
        let t = ConvergenceTable {
            rows: vec![ConvergenceRow { depth: 1, mesh: 0.5, sup_diff: 1e-3, op_diff: 2e-3, fitted_order: f64::NAN }],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("depth,|P|,sup_diff,op_diff,fitted_order\n1,"));
    }
}
