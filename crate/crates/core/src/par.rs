//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers fan out over rayon; without it they
//! run the same closures in order. Both paths produce identical results: work
//! is split into chunks whose boundaries do not depend on the thread count, and
//! partial results are combined in chunk order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Applies `f` to every `chunk`-sized slice of `data` together with its chunk index.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Splits `total` work items into fixed-size blocks of `block` items and maps
/// `f(block_index, start, len)` over them, returning the per-block results in order.
pub fn map_blocks<T, F>(total: usize, block: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize, usize) -> T + Sync + Send,
{
    let block = block.max(1);
    let n_blocks = total.div_ceil(block);
    map_indexed(n_blocks, |i| {
        let start = i * block;
        f(i, start, block.min(total - start))
    })
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
