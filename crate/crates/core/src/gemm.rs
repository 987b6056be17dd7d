//! Blocked dense product `C += A·B` on row-major `f64` slices.
//!
//! Every output element is accumulated as `acc = a[i][p].mul_add(b[p][j], acc)` for
//! `p = 0, 1, …, k-1`, starting from the value already stored in `C`. Blocking over `p`
//! writes the partial accumulator back to `C` and resumes from it, so the sequence of
//! rounding steps is the one of the textbook triple loop. Because fused multiply-add is
//! correctly rounded, the SIMD variants, the portable fallback and any row partitioning
//! all produce identical bits.

/// Rows of `C` computed together by the register tile.
const MR: usize = 8;
/// Columns of `C` held in registers (two 512-bit or four 256-bit vectors).
const NR: usize = 16;
/// Depth of one pass over `B`; keeps a `KC × n` panel resident in L2.
const KC: usize = 256;
/// Row granularity handed to worker threads.
#[cfg(feature = "parallel")]
const PAR_ROWS: usize = 4 * MR;

/// `c (m×n) += a (m×k) · b (k×n)` on the calling thread.
pub fn gemm_acc_seq(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    debug_assert_eq!(b.len(), k * n);
    if n == 0 || k == 0 {
        return;
    }
    debug_assert_eq!(a.len() / k, c.len() / n);
    dispatch(a, b, c, k, n);
}

/// `c (m×n) += a (m×k) · b (k×n)`, rows of `c` partitioned across the rayon pool.
#[cfg(feature = "parallel")]
pub fn gemm_acc_par(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    use rayon::prelude::*;

    debug_assert_eq!(b.len(), k * n);
    if n == 0 || k == 0 {
        return;
    }
    let m = c.len() / n;
    if m <= PAR_ROWS || rayon::current_num_threads() == 1 {
        return dispatch(a, b, c, k, n);
    }
    c.par_chunks_mut(PAR_ROWS * n)
        .zip(a.par_chunks(PAR_ROWS * k))
        .for_each(|(c_rows, a_rows)| dispatch(a_rows, b, c_rows, k, n));
}

/// Default entry point: parallel when the `parallel` feature is on.
pub fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    #[cfg(feature = "parallel")]
    gemm_acc_par(a, b, c, k, n);
    #[cfg(not(feature = "parallel"))]
    gemm_acc_seq(a, b, c, k, n);
}

fn dispatch(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { blocked_avx512(a, b, c, k, n) };
        }
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: as above.
            return unsafe { blocked_avx2(a, b, c, k, n) };
        }
    }
    blocked(a, b, c, k, n);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,fma")]
unsafe fn blocked_avx512(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    blocked(a, b, c, k, n)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn blocked_avx2(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    blocked(a, b, c, k, n)
}

#[inline(always)]
fn blocked(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    let m = c.len() / n;
    let full_rows = m - m % MR;
    let full_cols = n - n % NR;
    if full_cols == 0 {
        return narrow(a, b, c, k, n);
    }
    // Taken out of the thread-local rather than borrowed in a closure: closures do not
    // inherit the caller's target features, which would leave the tile unvectorised.
    let mut panel = PANEL.take();
    {
        let mut p0 = 0;
        while p0 < k {
            let p1 = (p0 + KC).min(k);
            pack_panel(b, n, p0, p1, full_cols, &mut panel);
            let depth = p1 - p0;
            let mut i0 = 0;
            while i0 < full_rows {
                for (s, j0) in (0..full_cols).step_by(NR).enumerate() {
                    let strip = &panel[s * depth * NR..(s + 1) * depth * NR];
                    tile(a, strip, c, k, n, i0, j0, p0, p1);
                }
                if full_cols < n {
                    for i in i0..i0 + MR {
                        row_span(a, b, c, k, n, i, full_cols, n, p0, p1);
                    }
                }
                i0 += MR;
            }
            for i in full_rows..m {
                row_span(a, b, c, k, n, i, 0, n, p0, p1);
            }
            p0 = p1;
        }
    }
    PANEL.set(panel);
}

/// Outputs narrower than one register tile: `MR` rows advance together so their
/// independent chains overlap instead of serialising on FMA latency.
#[inline(always)]
fn narrow(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    let m = c.len() / n;
    let full_rows = m - m % MR;
    let mut acc = [[0.0f64; NR]; MR];
    for i0 in (0..full_rows).step_by(MR) {
        for (r, acc_row) in acc.iter_mut().enumerate() {
            acc_row[..n].copy_from_slice(&c[(i0 + r) * n..][..n]);
        }
        let rows: [&[f64]; MR] = std::array::from_fn(|r| &a[(i0 + r) * k..][..k]);
        for (p, b_row) in b.chunks_exact(n).enumerate() {
            for (acc_row, a_row) in acc.iter_mut().zip(&rows) {
                let a_ip = a_row[p];
                for (slot, &b_pj) in acc_row[..n].iter_mut().zip(b_row) {
                    *slot = a_ip.mul_add(b_pj, *slot);
                }
            }
        }
        for (r, acc_row) in acc.iter().enumerate() {
            c[(i0 + r) * n..][..n].copy_from_slice(&acc_row[..n]);
        }
    }
    for i in full_rows..m {
        row_span(a, b, c, k, n, i, 0, n, 0, k);
    }
}

thread_local! {
    static PANEL: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Copies `b[p0..p1, 0..cols]` into consecutive `depth × NR` strips.
#[inline(always)]
fn pack_panel(b: &[f64], n: usize, p0: usize, p1: usize, cols: usize, panel: &mut Vec<f64>) {
    panel.clear();
    for j0 in (0..cols).step_by(NR) {
        for p in p0..p1 {
            panel.extend_from_slice(&b[p * n + j0..][..NR]);
        }
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn tile(a: &[f64], strip: &[f64], c: &mut [f64], k: usize, n: usize, i0: usize, j0: usize, p0: usize, p1: usize) {
    let mut acc = [[0.0f64; NR]; MR];
    for (r, acc_row) in acc.iter_mut().enumerate() {
        acc_row.copy_from_slice(&c[(i0 + r) * n + j0..][..NR]);
    }
    for (p, b_row) in (p0..p1).zip(strip.chunks_exact(NR)) {
        let b_row: &[f64; NR] = b_row.try_into().unwrap();
        for (r, acc_row) in acc.iter_mut().enumerate() {
            let a_ip = a[(i0 + r) * k + p];
            for (slot, &b_pj) in acc_row.iter_mut().zip(b_row) {
                *slot = a_ip.mul_add(b_pj, *slot);
            }
        }
    }
    for (r, acc_row) in acc.iter().enumerate() {
        c[(i0 + r) * n + j0..][..NR].copy_from_slice(acc_row);
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn row_span(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize, i: usize, j0: usize, j1: usize, p0: usize, p1: usize) {
    let c_row = &mut c[i * n + j0..i * n + j1];
    for p in p0..p1 {
        let a_ip = a[i * k + p];
        let b_row = &b[p * n + j0..p * n + j1];
        for (slot, &b_pj) in c_row.iter_mut().zip(b_row) {
            *slot = a_ip.mul_add(b_pj, *slot);
        }
    }
}
