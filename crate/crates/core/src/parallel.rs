//! Process-wide parallelism switch.
//!
//! Data-parallel loops in this crate partition work so that every output
//! element is accumulated in a fixed order by exactly one worker, which makes
//! results bitwise independent of the thread count. The single-thread switch
//! additionally forces plain sequential execution for strict reproducibility
//! audits.

use std::sync::atomic::{AtomicBool, Ordering};

static SINGLE_THREAD: AtomicBool = AtomicBool::new(false);

pub fn set_single_thread(on: bool) {
    SINGLE_THREAD.store(on, Ordering::SeqCst);
}

pub fn single_thread() -> bool {
    SINGLE_THREAD.load(Ordering::SeqCst)
}

/// Run `f(i, chunk)` over equally sized mutable chunks, in parallel unless
/// single-thread mode is set. Chunk boundaries are fixed by `chunk_len`, never
/// by the worker count.
pub fn for_each_chunk_mut<T: Send, F>(data: &mut [T], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    debug_assert!(chunk_len > 0 && data.len().is_multiple_of(chunk_len));
    if single_thread() {
        for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
            f(i, chunk);
        }
    } else {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T: Send, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Send + Sync,
{
    if single_thread() {
        (0..n).map(f).collect()
    } else {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
}
