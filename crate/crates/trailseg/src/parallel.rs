//! Dispatch layer between the rayon-backed and sequential code paths.
//!
//! Every helper here is a pure, index-stable map: with the `parallel`
//! feature enabled the work is distributed with rayon, and the result is
//! bit-identical to the sequential fallback.

#[cfg(feature = "parallel")]
pub(crate) fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Below this element count a fine-grained kernel runs sequentially: the
/// cost of bridging into the pool dwarfs the work itself.
pub(crate) const FINE_PAR_THRESHOLD: usize = 4096;

/// `map_collect` for cheap per-element kernels: small inputs stay on the
/// calling thread. Output is identical either way.
#[cfg(feature = "parallel")]
pub(crate) fn map_collect_fine<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if items.len() < FINE_PAR_THRESHOLD {
        items.iter().map(f).collect()
    } else {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_collect_fine<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Applies `f` to corresponding chunks of an input and an output buffer.
/// Chunk boundaries are identical in both modes, so the output does not
/// depend on the execution order.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_chunk_pair<T, U, F>(src: &[T], dst: &mut [U], chunk: usize, f: F)
where
    T: Sync,
    U: Send,
    F: Fn(&[T], &mut [U]) + Sync + Send,
{
    use rayon::prelude::*;
    dst.par_chunks_mut(chunk)
        .zip(src.par_chunks(chunk))
        .for_each(|(d, s)| f(s, d));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_chunk_pair<T, U, F>(src: &[T], dst: &mut [U], chunk: usize, f: F)
where
    F: Fn(&[T], &mut [U]),
{
    for (d, s) in dst.chunks_mut(chunk).zip(src.chunks(chunk)) {
        f(s, d);
    }
}

/// Sum of a per-chunk integer statistic; integer addition keeps the result
/// independent of the reduction order.
#[cfg(feature = "parallel")]
pub(crate) fn sum_chunks<T, F>(items: &[T], chunk: usize, f: F) -> u64
where
    T: Sync,
    F: Fn(&[T]) -> u64 + Sync + Send,
{
    use rayon::prelude::*;
    items.par_chunks(chunk).map(f).sum()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn sum_chunks<T, F>(items: &[T], chunk: usize, f: F) -> u64
where
    F: Fn(&[T]) -> u64,
{
    items.chunks(chunk).map(f).sum()
}

/// Chunk length (in pixels) for raster kernels: whole rows, sized so each
/// worker sees a handful of large tasks. Chunking never affects results.
pub(crate) fn pixel_chunk(width: u32, height: u32) -> usize {
    let row = width.max(1) as usize;
    #[cfg(feature = "parallel")]
    {
        let tasks = 4 * rayon::current_num_threads().max(1);
        let rows_per_task = (height.max(1) as usize).div_ceil(tasks).max(1);
        row * rows_per_task
    }
    #[cfg(not(feature = "parallel"))]
    {
        row * height.max(1) as usize
    }
}

/// Number of worker threads the batch driver will use.
pub fn effective_jobs(requested: usize) -> usize {
    #[cfg(feature = "parallel")]
    {
        if requested == 0 {
            rayon::current_num_threads()
        } else {
            requested
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        1
    }
}
