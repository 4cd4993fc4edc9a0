//! The one dense product every kernel reduces to.
//!
//! `out[r * cols + c] = sum_x a[r * depth + x] * b[c * depth + x]`, both
//! operands row-major with the reduction axis contiguous. Products are formed
//! and accumulated in `f64` with a fixed four-lane association, so the scalar
//! and blocked paths produce bit-identical results and each output depends only
//! on its own row and column.

use alloc::vec::Vec;

use crate::tensor::MacTally;

const LANES: usize = 4;

/// Double-precision dot product with the fixed lane association.
#[inline(always)]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += xa[l] as f64 * xb[l] as f64;
        }
    }
    let mut tail = 0.0f64;
    for (&xa, &xb) in ca.remainder().iter().zip(cb.remainder()) {
        tail += xa as f64 * xb as f64;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

/// Reference path: one [`dot`] per output.
pub fn gemm_scalar(a: &[f32], b: &[f32], rows: usize, cols: usize, depth: usize, out: &mut [f64]) {
    check(a, b, rows, cols, depth, out);
    for r in 0..rows {
        let ar = &a[r * depth..(r + 1) * depth];
        for c in 0..cols {
            out[r * cols + c] = dot(ar, &b[c * depth..(c + 1) * depth]);
        }
    }
}

/// 2x2 register-blocked path. Each output keeps the same lane association as
/// [`dot`], so results match [`gemm_scalar`] bit for bit.
pub fn gemm_blocked(a: &[f32], b: &[f32], rows: usize, cols: usize, depth: usize, out: &mut [f64]) {
    check(a, b, rows, cols, depth, out);
    let rows2 = rows / 2 * 2;
    let cols2 = cols / 2 * 2;
    // Widening is exact, so converting the right operand once up front does
    // not change any product.
    let bw: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    for r in (0..rows2).step_by(2) {
        let a0 = &a[r * depth..(r + 1) * depth];
        let a1 = &a[(r + 1) * depth..(r + 2) * depth];
        for c in (0..cols2).step_by(2) {
            let b0 = &bw[c * depth..(c + 1) * depth];
            let b1 = &bw[(c + 1) * depth..(c + 2) * depth];
            let [d00, d01, d10, d11] = dot_2x2(a0, a1, b0, b1);
            out[r * cols + c] = d00;
            out[r * cols + c + 1] = d01;
            out[(r + 1) * cols + c] = d10;
            out[(r + 1) * cols + c + 1] = d11;
        }
        for c in cols2..cols {
            let bc = &b[c * depth..(c + 1) * depth];
            out[r * cols + c] = dot(a0, bc);
            out[(r + 1) * cols + c] = dot(a1, bc);
        }
    }
    for r in rows2..rows {
        let ar = &a[r * depth..(r + 1) * depth];
        for c in 0..cols {
            out[r * cols + c] = dot(ar, &b[c * depth..(c + 1) * depth]);
        }
    }
}

#[cfg(not(target_arch = "x86_64"))]
#[inline(always)]
fn dot_2x2(a0: &[f32], a1: &[f32], b0: &[f64], b1: &[f64]) -> [f64; 4] {
    let mut acc = [[0.0f64; LANES]; 4];
    let n = a0.len() / LANES * LANES;
    for ((xa0, xa1), (xb0, xb1)) in a0[..n]
        .chunks_exact(LANES)
        .zip(a1[..n].chunks_exact(LANES))
        .zip(b0[..n].chunks_exact(LANES).zip(b1[..n].chunks_exact(LANES)))
    {
        for l in 0..LANES {
            let (p0, p1) = (xa0[l] as f64, xa1[l] as f64);
            let (q0, q1) = (xb0[l], xb1[l]);
            acc[0][l] += p0 * q0;
            acc[1][l] += p0 * q1;
            acc[2][l] += p1 * q0;
            acc[3][l] += p1 * q1;
        }
    }
    let mut res = [0.0f64; 4];
    for i in 0..4 {
        let s = &acc[i];
        res[i] = (s[0] + s[1]) + (s[2] + s[3]);
    }
    finish_2x2(a0, a1, b0, b1, n, res)
}

/// SSE2 version of the portable kernel above: lanes 0-1 and 2-3 each live in
/// one register, with the same separate multiply and add per lane.
#[cfg(target_arch = "x86_64")]
#[inline(always)]
fn dot_2x2(a0: &[f32], a1: &[f32], b0: &[f64], b1: &[f64]) -> [f64; 4] {
    use core::arch::x86_64::*;
    let len = a0.len();
    assert!(a1.len() == len && b0.len() == len && b1.len() == len);
    let n = len / LANES * LANES;
    // SAFETY: SSE2 is part of the x86_64 baseline. No raw memory access.
    let res = unsafe {
        // Built from indexed values rather than pointer loads so that builds with
        // debug assertions do not pay for the intrinsics' pointer checks.
        let load2 = |p: &[f32]| _mm_cvtps_pd(_mm_set_ps(0.0, 0.0, p[1], p[0]));
        let load2d = |p: &[f64]| _mm_set_pd(p[1], p[0]);
        let mut acc = [_mm_setzero_pd(); 8];
        let mut x = 0;
        while x < n {
            let p0l = load2(&a0[x..]);
            let p0h = load2(&a0[x + 2..]);
            let p1l = load2(&a1[x..]);
            let p1h = load2(&a1[x + 2..]);
            let q0l = load2d(&b0[x..]);
            let q0h = load2d(&b0[x + 2..]);
            let q1l = load2d(&b1[x..]);
            let q1h = load2d(&b1[x + 2..]);
            acc[0] = _mm_add_pd(acc[0], _mm_mul_pd(p0l, q0l));
            acc[1] = _mm_add_pd(acc[1], _mm_mul_pd(p0h, q0h));
            acc[2] = _mm_add_pd(acc[2], _mm_mul_pd(p0l, q1l));
            acc[3] = _mm_add_pd(acc[3], _mm_mul_pd(p0h, q1h));
            acc[4] = _mm_add_pd(acc[4], _mm_mul_pd(p1l, q0l));
            acc[5] = _mm_add_pd(acc[5], _mm_mul_pd(p1h, q0h));
            acc[6] = _mm_add_pd(acc[6], _mm_mul_pd(p1l, q1l));
            acc[7] = _mm_add_pd(acc[7], _mm_mul_pd(p1h, q1h));
            x += LANES;
        }
        let mut res = [0.0f64; 4];
        for i in 0..4 {
            let (lo, hi) = (acc[2 * i], acc[2 * i + 1]);
            let lo = _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
            let hi = _mm_cvtsd_f64(hi) + _mm_cvtsd_f64(_mm_unpackhi_pd(hi, hi));
            res[i] = lo + hi;
        }
        res
    };
    finish_2x2(a0, a1, b0, b1, n, res)
}

#[inline(always)]
fn finish_2x2(a0: &[f32], a1: &[f32], b0: &[f64], b1: &[f64], n: usize, mut res: [f64; 4]) -> [f64; 4] {
    let mut tail = [0.0f64; 4];
    for x in n..a0.len() {
        let (p0, p1) = (a0[x] as f64, a1[x] as f64);
        let (q0, q1) = (b0[x], b1[x]);
        tail[0] += p0 * q0;
        tail[1] += p0 * q1;
        tail[2] += p1 * q0;
        tail[3] += p1 * q1;
    }
    for i in 0..4 {
        res[i] += tail[i];
    }
    res
}

/// Dispatches to the path selected by the `blocked` feature and records
/// `rows * cols * depth` products on `tally`.
#[inline]
pub fn gemm(
    a: &[f32],
    b: &[f32],
    rows: usize,
    cols: usize,
    depth: usize,
    out: &mut [f64],
    tally: &mut MacTally,
) {
    #[cfg(feature = "blocked")]
    gemm_blocked(a, b, rows, cols, depth, out);
    #[cfg(not(feature = "blocked"))]
    gemm_scalar(a, b, rows, cols, depth, out);
    tally.add((rows * cols * depth) as u64);
}

fn check(a: &[f32], b: &[f32], rows: usize, cols: usize, depth: usize, out: &[f64]) {
    assert_eq!(a.len(), rows * depth, "lhs length");
    assert_eq!(b.len(), cols * depth, "rhs length");
    assert_eq!(out.len(), rows * cols, "output length");
}
