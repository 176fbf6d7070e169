//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel entry point in the crate funnels through [`map_indexed`].
//! Work items are fixed before dispatch and results come back in input
//! order, so any reduction done by the caller sees the same sequence of
//! partial results whether it ran on one thread or many. That keeps exact
//! enumeration and replication merges bit-identical across modes.
//!
//! Without the `parallel` feature, [`Execution::Parallel`] silently runs
//! sequentially.

/// How a batch of independent work items is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this build can actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Apply `f` to every index in `0..len`, returning results in index order.
pub fn map_indexed<T, F>(len: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}
