//! Naive double-precision reference implementations and fixtures shared by
//! the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use waveformer_core::model::{Affine, Norm};
use waveformer_core::{ModelConfig, Tensor, Tensor2};

/// Dense `rows x cols` matrix in `f64`, indexed `[row][col]`.
pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(r: &mut ChaCha8Rng, n: usize, bound: f32) -> Vec<f32> {
    (0..n).map(|_| r.random_range(-bound..bound)).collect()
}

pub fn rand_t2(r: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f32) -> Tensor2 {
    Tensor2::from_vec(rows, cols, rand_vec(r, rows * cols, bound)).unwrap()
}

pub fn rand_tensor(r: &mut ChaCha8Rng, dims: &[usize], bound: f32) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), rand_vec(r, n, bound)).unwrap()
}

pub fn to_mat(t: &Tensor2) -> Mat {
    (0..t.rows()).map(|r| t.row(r).iter().map(|&v| v as f64).collect()).collect()
}

pub fn max_diff(a: &Tensor2, b: &Mat) -> f64 {
    assert_eq!(a.rows(), b.len(), "row count");
    let mut worst = 0.0f64;
    for (r, row) in b.iter().enumerate() {
        assert_eq!(a.cols(), row.len(), "col count");
        for (c, &v) in row.iter().enumerate() {
            worst = worst.max((a.get(r, c) as f64 - v).abs());
        }
    }
    worst
}

pub fn max_diff_slices(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

/// `y[o][t] = b[o] + sum_{i,j} w[o,i,j] x[i][t*stride + j*dil - left_pad]`.
pub fn conv1d_oracle(
    x: &Mat,
    w: &Tensor,
    b: &[f32],
    stride: usize,
    dil: usize,
    left_pad: usize,
    right_pad: usize,
) -> Mat {
    let [cout, cin, k] = [w.dims()[0], w.dims()[1], w.dims()[2]];
    let len = x[0].len();
    let padded = len + left_pad + right_pad;
    let span = (k - 1) * dil + 1;
    let frames = (padded - span) / stride + 1;
    let mut y = vec![vec![0.0; frames]; cout];
    for o in 0..cout {
        for t in 0..frames {
            let mut acc = b[o] as f64;
            for i in 0..cin {
                for j in 0..k {
                    let pos = (t * stride + j * dil) as isize - left_pad as isize;
                    if pos >= 0 && (pos as usize) < len {
                        acc += w.data()[(o * cin + i) * k + j] as f64 * x[i][pos as usize];
                    }
                }
            }
            y[o][t] = acc;
        }
    }
    y
}

/// Scatter-add form of the transposed convolution, `w` is `[in, out, k]`.
pub fn conv_transpose_oracle(x: &Mat, w: &Tensor, b: &[f32], stride: usize, dil: usize) -> Mat {
    let [cin, cout, k] = [w.dims()[0], w.dims()[1], w.dims()[2]];
    let frames = x[0].len();
    let len = (frames - 1) * stride + (k - 1) * dil + 1;
    let mut y: Mat = (0..cout).map(|o| vec![b[o] as f64; len]).collect();
    for i in 0..cin {
        for t in 0..frames {
            for o in 0..cout {
                for j in 0..k {
                    y[o][t * stride + j * dil] += w.data()[(i * cout + o) * k + j] as f64 * x[i][t];
                }
            }
        }
    }
    y
}

/// `w` is `[out, in]`.
pub fn linear_oracle(x: &Mat, w: &Tensor, b: &[f32]) -> Mat {
    let [cout, cin] = [w.dims()[0], w.dims()[1]];
    let frames = x[0].len();
    (0..cout)
        .map(|o| {
            (0..frames)
                .map(|t| b[o] as f64 + (0..cin).map(|i| w.data()[o * cin + i] as f64 * x[i][t]).sum::<f64>())
                .collect()
        })
        .collect()
}

pub fn affine_oracle(x: &Mat, a: &Affine) -> Mat {
    linear_oracle(x, &a.weight, &a.bias)
}

pub fn relu_oracle(mut x: Mat) -> Mat {
    for row in &mut x {
        for v in row {
            *v = v.max(0.0);
        }
    }
    x
}

pub fn layer_norm_oracle(x: &Mat, gain: &[f32], bias: &[f32], eps: f64) -> Mat {
    let rows = x.len();
    let frames = x[0].len();
    let mut y = vec![vec![0.0; frames]; rows];
    for t in 0..frames {
        let mean = (0..rows).map(|r| x[r][t]).sum::<f64>() / rows as f64;
        let var = (0..rows).map(|r| (x[r][t] - mean).powi(2)).sum::<f64>() / rows as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for r in 0..rows {
            y[r][t] = (x[r][t] - mean) * inv * gain[r] as f64 + bias[r] as f64;
        }
    }
    y
}

pub fn norm_oracle(x: &Mat, n: &Norm) -> Mat {
    layer_norm_oracle(x, &n.gain, &n.bias, 1e-5)
}

/// Multi-head softmax attention: `q [C,Tq]`, `k [C,Tk]`, `v [Cv,Tk]`.
pub fn attention_oracle(q: &Mat, k: &Mat, v: &Mat, heads: usize) -> Mat {
    let dh = q.len() / heads;
    let dv = v.len() / heads;
    let tq = q[0].len();
    let tk = k[0].len();
    let mut out = vec![vec![0.0; tq]; v.len()];
    for h in 0..heads {
        for t in 0..tq {
            let scores: Vec<f64> = (0..tk)
                .map(|s| (h * dh..(h + 1) * dh).map(|c| q[c][t] * k[c][s]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for c in h * dv..(h + 1) * dv {
                out[c][t] = (0..tk).map(|s| exps[s] / sum * v[c][s]).sum();
            }
        }
    }
    out
}

pub fn add_mat(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn concat_mat(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().chain(y).cloned().collect()).collect()
}

pub fn last_cols(a: &Mat, n: usize) -> Mat {
    a.iter().map(|r| r[r.len() - n..].to_vec()).collect()
}

/// Reduced model used wherever the full-size model would make a test slow.
/// Geometry (L, K, M, P) matches the defaults; only widths shrink.
pub fn compact_config() -> ModelConfig {
    ModelConfig { enc_dim: 64, dec_dim: 32, heads: 4, ffn_dim: 128, embed_hidden: 64, ..ModelConfig::default() }
}

/// Tiny model for exhaustive probes.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        stride: 4,
        enc_dim: 12,
        dec_dim: 8,
        chunk_frames: 5,
        layers: 4,
        kernel: 3,
        num_classes: 7,
        heads: 2,
        ffn_dim: 16,
        embed_hidden: 10,
        sample_rate: 16_000,
    }
}

pub fn noise(seed: u64, n: usize, amplitude: f32) -> Vec<f32> {
    rand_vec(&mut rng(seed), n, amplitude)
}
