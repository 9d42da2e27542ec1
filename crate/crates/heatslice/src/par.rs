//! Execution strategy for the data-parallel kernels.
//!
//! With the `parallel` feature the work is split over rayon's pool, otherwise
//! every strategy runs on the calling thread.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indices<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Run `f` on each mutable chunk together with its chunk index.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, exec: Execution, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Build a global pool with `threads` workers. A no-op without the `parallel` feature.
pub fn init_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
