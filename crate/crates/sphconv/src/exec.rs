//! Sequential/parallel execution switch.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How batch-level loops are executed.
///
/// `Parallel` uses rayon when the `parallel` feature is enabled and silently
/// falls back to the sequential path otherwise, so callers can request it
/// unconditionally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && matches!(self, ExecMode::Parallel)
    }
}

/// Map `f` over `items`, honoring the execution mode. Output order matches
/// input order in both modes, so downstream reductions stay deterministic.
pub(crate) fn map_items<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Indexed variant of [`map_items`].
pub(crate) fn map_indices<R, F>(mode: ExecMode, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..len).map(f).collect()
}
