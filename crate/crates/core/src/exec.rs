use rayon::prelude::*;

/// Whether per-element work is spread over the rayon pool.
///
/// Both modes produce bit-identical results: parallel work is collected in
/// index order and every reduction runs sequentially afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    Sequential,
    #[default]
    Parallel,
}

/// `(0..n).map(f)` collected in order, in parallel when requested.
pub(crate) fn map_indexed<T, F>(mode: ExecutionMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecutionMode::Sequential => (0..n).map(f).collect(),
        ExecutionMode::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}
