//! Row-partitioned helpers shared by the elementwise kernels.
//!
//! With the `parallel` feature the work is split into fixed chunks of rows and handed to
//! rayon; otherwise the same closure runs over the same chunks in order. The chunking never
//! changes the per-element arithmetic, so both builds are bit-identical.

/// Rows per work item. Small enough to balance, large enough to amortise scheduling.
pub const CHUNK_ROWS: usize = 256;

/// Calls `f(first_row, rows)` for consecutive row blocks of a row-major buffer.
pub fn for_each_row_block<F>(data: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if cols == 0 || data.is_empty() {
        return;
    }
    let step = CHUNK_ROWS * cols;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if data.len() > step && rayon::current_num_threads() > 1 {
            data.par_chunks_mut(step)
                .enumerate()
                .for_each(|(i, block)| f(i * CHUNK_ROWS, block));
            return;
        }
    }
    for (i, block) in data.chunks_mut(step).enumerate() {
        f(i * CHUNK_ROWS, block);
    }
}

/// Maps `0..len` through `f` and collects, in parallel when enabled.
pub fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if len > 1 && rayon::current_num_threads() > 1 {
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    (0..len).map(f).collect()
}
