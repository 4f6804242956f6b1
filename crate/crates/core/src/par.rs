//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the current rayon pool; without it every helper runs sequentially with the
//! same iteration order and reduction order, so results are bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(first_row, chunk)` for consecutive bands of `rows_per_chunk` rows
/// of a row-major buffer of the given width.
pub(crate) fn for_each_band<F>(buf: &mut [f32], width: usize, rows_per_chunk: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    let chunk = width * rows_per_chunk.max(1);
    #[cfg(feature = "parallel")]
    buf.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i * rows_per_chunk, c));
    #[cfg(not(feature = "parallel"))]
    buf.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i * rows_per_chunk, c));
}

/// Calls `f(row_index, row)` for every row.
pub(crate) fn for_each_row<F>(buf: &mut [f32], width: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    for_each_band(buf, width, 1, f)
}

/// Ordered map over indices `0..n`.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
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

/// Ordered map over a slice.
pub(crate) fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` on a pool of exactly `threads` workers. Without the `parallel`
/// feature this just calls `f`.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
                f()
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Number of workers the current pool will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
