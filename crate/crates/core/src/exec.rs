//! Sequential or rayon-parallel execution of the chunked loops over the
//! combination space.
//!
//! Every helper here hands each chunk to the closure with its index, and
//! results are combined in chunk order, so both modes produce the same bits.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the crate is built without `parallel`.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Smallest number of elements worth handing to a worker.
pub(crate) const MIN_PARALLEL_CHUNK: usize = 1 << 14;

/// Rounds `min_len` up to a multiple of `granule`.
pub(crate) fn chunk_len_for(granule: usize, min_len: usize) -> usize {
    let granule = granule.max(1);
    min_len.div_ceil(granule).max(1) * granule
}

pub(crate) fn for_each_chunk_mut<T, F>(exec: Execution, data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && data.len() > chunk_len {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(k, chunk)| f(k, chunk));
        return;
    }
    let _ = exec;
    for (k, chunk) in data.chunks_mut(chunk_len).enumerate() {
        f(k, chunk);
    }
}

pub(crate) fn map_chunks<T, R, F>(exec: Execution, data: &[T], chunk_len: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &[T]) -> R + Send + Sync,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && data.len() > chunk_len {
        use rayon::prelude::*;
        return data
            .par_chunks(chunk_len)
            .enumerate()
            .map(|(k, chunk)| f(k, chunk))
            .collect();
    }
    let _ = exec;
    data.chunks(chunk_len)
        .enumerate()
        .map(|(k, chunk)| f(k, chunk))
        .collect()
}
