//! Convolution, normalization, affine and attention kernels.
//!
//! Every kernel is a pure function of its inputs. Products go through
//! [`gemm`](crate::gemm::gemm) and accumulate in `f64`; results are rounded to
//! `f32` once, after the bias is added. The `*_tallied` variants additionally
//! record the multiply-accumulates they execute.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gemm::gemm;
use crate::tensor::{ConvSpec, MacTally, Tensor, Tensor2};

/// Normalization epsilon used throughout the model.
pub const LAYER_NORM_EPS: f32 = 1e-5;

fn expect_dims(name: &str, got: &[usize], want: &[usize]) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!("{name}: expected dims {want:?}, got {got:?}")));
    }
    Ok(())
}

fn expect_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!("{name}: expected length {want}, got {got}")));
    }
    Ok(())
}

/// Number of output frames of a convolution over `padded_len` frames.
pub fn conv_output_len(padded_len: usize, spec: &ConvSpec) -> usize {
    (padded_len - spec.span()) / spec.stride + 1
}

/// 1-D convolution with explicit zero padding.
///
/// `weight` is `[out, in, kernel]`. Output frame `t` of channel `o` is
/// `bias[o] + sum_{i,j} w[o,i,j] * x[i, t*stride + j*dilation - left_pad]`
/// with out-of-range input reading as zero.
pub fn conv1d(
    input: &Tensor2,
    weight: &Tensor,
    bias: &[f32],
    spec: &ConvSpec,
    left_pad: usize,
    right_pad: usize,
) -> Result<Tensor2> {
    conv1d_tallied(input, weight, bias, spec, left_pad, right_pad, &mut MacTally::new())
}

pub fn conv1d_tallied(
    input: &Tensor2,
    weight: &Tensor,
    bias: &[f32],
    spec: &ConvSpec,
    left_pad: usize,
    right_pad: usize,
    tally: &mut MacTally,
) -> Result<Tensor2> {
    spec.validate()?;
    expect_len("conv1d input channels", input.rows(), spec.in_channels)?;
    expect_dims(
        "conv1d weight",
        weight.dims(),
        &[spec.out_channels, spec.in_channels, spec.kernel_size],
    )?;
    expect_len("conv1d bias", bias.len(), spec.out_channels)?;
    if input.cols() == 0 {
        return Err(Error::invalid("conv1d: zero-length input"));
    }
    let padded = input.cols() + left_pad + right_pad;
    if padded < spec.span() {
        return Err(Error::invalid(format!(
            "conv1d: padded length {padded} shorter than kernel span {}",
            spec.span()
        )));
    }
    let frames = conv_output_len(padded, spec);
    let depth = spec.in_channels * spec.kernel_size;

    // Gather every receptive window into a contiguous row.
    let mut cols = vec![0.0f32; frames * depth];
    for t in 0..frames {
        let row = &mut cols[t * depth..(t + 1) * depth];
        for i in 0..spec.in_channels {
            let x = input.row(i);
            for j in 0..spec.kernel_size {
                let pos = (t * spec.stride + j * spec.dilation) as isize - left_pad as isize;
                if pos >= 0 && (pos as usize) < x.len() {
                    row[i * spec.kernel_size + j] = x[pos as usize];
                }
            }
        }
    }

    let mut acc = vec![0.0f64; spec.out_channels * frames];
    gemm(weight.data(), &cols, spec.out_channels, frames, depth, &mut acc, tally);
    Ok(round_with_bias(&acc, bias, spec.out_channels, frames))
}

/// Transposed 1-D convolution (overlap-add synthesis).
///
/// `weight` is `[in, out, kernel]`. Input frame `t` scatters `kernel` samples
/// per output channel starting at `t * stride`; overlapping contributions sum.
/// The output has `(frames - 1) * stride + span` samples.
pub fn conv_transpose1d(
    input: &Tensor2,
    weight: &Tensor,
    bias: &[f32],
    spec: &ConvSpec,
) -> Result<Tensor2> {
    conv_transpose1d_tallied(input, weight, bias, spec, &mut MacTally::new())
}

pub fn conv_transpose1d_tallied(
    input: &Tensor2,
    weight: &Tensor,
    bias: &[f32],
    spec: &ConvSpec,
    tally: &mut MacTally,
) -> Result<Tensor2> {
    expect_len("conv_transpose1d bias", bias.len(), spec.out_channels)?;
    let acc = overlap_add(input, weight, spec, tally)?;
    let len = acc.len() / spec.out_channels;
    Ok(round_with_bias(&acc, bias, spec.out_channels, len))
}

/// Bias-free overlap-add accumulation in `f64`, `[out][samples]` flattened.
pub(crate) fn overlap_add(
    input: &Tensor2,
    weight: &Tensor,
    spec: &ConvSpec,
    tally: &mut MacTally,
) -> Result<Vec<f64>> {
    spec.validate()?;
    expect_len("conv_transpose1d input channels", input.rows(), spec.in_channels)?;
    expect_dims(
        "conv_transpose1d weight",
        weight.dims(),
        &[spec.in_channels, spec.out_channels, spec.kernel_size],
    )?;
    let frames = input.cols();
    if frames == 0 {
        return Err(Error::invalid("conv_transpose1d: zero-length input"));
    }
    let (cin, cout, k) = (spec.in_channels, spec.out_channels, spec.kernel_size);
    let len = (frames - 1) * spec.stride + spec.span();

    // Rows indexed by (out channel, tap), reduction over input channels.
    let w = weight.data();
    let mut taps = vec![0.0f32; cout * k * cin];
    for i in 0..cin {
        for o in 0..cout {
            for j in 0..k {
                taps[(o * k + j) * cin + i] = w[(i * cout + o) * k + j];
            }
        }
    }
    let xt = input.transpose();
    let mut contrib = vec![0.0f64; cout * k * frames];
    gemm(&taps, xt.data(), cout * k, frames, cin, &mut contrib, tally);

    let mut acc = vec![0.0f64; cout * len];
    for t in 0..frames {
        for o in 0..cout {
            for j in 0..k {
                acc[o * len + t * spec.stride + j * spec.dilation] += contrib[(o * k + j) * frames + t];
            }
        }
    }
    Ok(acc)
}

fn round_with_bias(acc: &[f64], bias: &[f32], rows: usize, cols: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(rows, cols);
    for (o, (dst, src)) in out
        .data_mut()
        .chunks_exact_mut(cols)
        .zip(acc.chunks_exact(cols))
        .enumerate()
    {
        let b = bias[o] as f64;
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s + b) as f32;
        }
    }
    out
}

/// Per-frame normalization over the channel axis, then `* gain + bias`.
pub fn layer_norm(input: &Tensor2, gain: &[f32], bias: &[f32], eps: f32) -> Result<Tensor2> {
    let rows = input.rows();
    if rows == 0 {
        return Err(Error::invalid("layer_norm: zero channels"));
    }
    expect_len("layer_norm gain", gain.len(), rows)?;
    expect_len("layer_norm bias", bias.len(), rows)?;
    let cols = input.cols();
    let x = input.data();
    let mut out = Tensor2::zeros(rows, cols);
    let y = out.data_mut();
    for t in 0..cols {
        let mut mean = 0.0f64;
        for r in 0..rows {
            mean += x[r * cols + t] as f64;
        }
        mean /= rows as f64;
        let mut var = 0.0f64;
        for r in 0..rows {
            let d = x[r * cols + t] as f64 - mean;
            var += d * d;
        }
        var /= rows as f64;
        let inv = 1.0 / libm::sqrt(var + eps as f64);
        for r in 0..rows {
            let z = (x[r * cols + t] as f64 - mean) * inv;
            y[r * cols + t] = (z * gain[r] as f64 + bias[r] as f64) as f32;
        }
    }
    Ok(out)
}

/// Per-frame affine map. `weight` is `[out, in]`.
pub fn linear(input: &Tensor2, weight: &Tensor, bias: &[f32]) -> Result<Tensor2> {
    linear_tallied(input, weight, bias, &mut MacTally::new())
}

pub fn linear_tallied(
    input: &Tensor2,
    weight: &Tensor,
    bias: &[f32],
    tally: &mut MacTally,
) -> Result<Tensor2> {
    let dims = weight.dims();
    if dims.len() != 2 || dims[1] != input.rows() {
        return Err(Error::invalid(format!(
            "linear: weight dims {dims:?} incompatible with {} input channels",
            input.rows()
        )));
    }
    let (out_ch, in_ch) = (dims[0], dims[1]);
    expect_len("linear bias", bias.len(), out_ch)?;
    let frames = input.cols();
    let xt = input.transpose();
    let mut acc = vec![0.0f64; out_ch * frames];
    gemm(weight.data(), xt.data(), out_ch, frames, in_ch, &mut acc, tally);
    Ok(round_with_bias(&acc, bias, out_ch, frames))
}

pub fn relu(input: &Tensor2) -> Tensor2 {
    let mut out = input.clone();
    relu_in_place(&mut out);
    out
}

pub fn relu_in_place(t: &mut Tensor2) {
    for v in t.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Elementwise product with a per-channel vector broadcast over frames.
pub fn scale_rows(input: &Tensor2, scale: &[f32]) -> Result<Tensor2> {
    expect_len("scale_rows", scale.len(), input.rows())?;
    let cols = input.cols();
    let mut out = input.clone();
    for (row, &s) in out.data_mut().chunks_exact_mut(cols.max(1)).zip(scale) {
        for v in row {
            *v *= s;
        }
    }
    Ok(out)
}

pub fn add(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    zip_with(a, b, |x, y| x + y)
}

pub fn mul(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    zip_with(a, b, |x, y| x * y)
}

fn zip_with(a: &Tensor2, b: &Tensor2, f: impl Fn(f32, f32) -> f32) -> Result<Tensor2> {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
        return Err(Error::invalid(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor2::from_vec(a.rows(), a.cols(), data)
}

fn check_attention(q: &Tensor2, k: &Tensor2, v: Option<&Tensor2>, heads: usize) -> Result<()> {
    if heads == 0 || !q.rows().is_multiple_of(heads) {
        return Err(Error::invalid(format!(
            "attention: {} channels not divisible by {heads} heads",
            q.rows()
        )));
    }
    if k.rows() != q.rows() {
        return Err(Error::invalid(format!(
            "attention: query channels {} != key channels {}",
            q.rows(),
            k.rows()
        )));
    }
    if k.cols() == 0 {
        return Err(Error::invalid("attention: no key frames"));
    }
    if let Some(v) = v {
        if v.rows() % heads != 0 {
            return Err(Error::invalid(format!(
                "attention: {} value channels not divisible by {heads} heads",
                v.rows()
            )));
        }
        if v.cols() != k.cols() {
            return Err(Error::invalid(format!(
                "attention: {} key frames vs {} value frames",
                k.cols(),
                v.cols()
            )));
        }
    }
    Ok(())
}

/// Softmax-normalized scaled dot-product weights for each head, each
/// `[query frames][key frames]` flattened, in `f64`.
fn head_weights(q: &Tensor2, k: &Tensor2, heads: usize, tally: &mut MacTally) -> Vec<Vec<f64>> {
    let dh = q.rows() / heads;
    let (tq, tk) = (q.cols(), k.cols());
    let scale = 1.0 / libm::sqrt(dh as f64);
    let qt = q.transpose();
    let kt = k.transpose();
    let mut out = Vec::with_capacity(heads);
    let mut qh = vec![0.0f32; tq * dh];
    let mut kh = vec![0.0f32; tk * dh];
    for h in 0..heads {
        for t in 0..tq {
            qh[t * dh..(t + 1) * dh].copy_from_slice(&qt.row(t)[h * dh..(h + 1) * dh]);
        }
        for s in 0..tk {
            kh[s * dh..(s + 1) * dh].copy_from_slice(&kt.row(s)[h * dh..(h + 1) * dh]);
        }
        let mut w = vec![0.0f64; tq * tk];
        gemm(&qh, &kh, tq, tk, dh, &mut w, tally);
        for row in w.chunks_exact_mut(tk) {
            let mut max = f64::NEG_INFINITY;
            for v in row.iter_mut() {
                *v *= scale;
                max = max.max(*v);
            }
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = libm::exp(*v - max);
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        out.push(w);
    }
    out
}

/// Softmax attention weights per head, each `[query frames x key frames]`.
pub fn attention_weights(q: &Tensor2, k: &Tensor2, heads: usize) -> Result<Vec<Tensor2>> {
    check_attention(q, k, None, heads)?;
    let (tq, tk) = (q.cols(), k.cols());
    head_weights(q, k, heads, &mut MacTally::new())
        .into_iter()
        .map(|w| Tensor2::from_vec(tq, tk, w.into_iter().map(|x| x as f32).collect()))
        .collect()
}

/// Multi-head scaled dot-product attention without projections.
///
/// `q` is `[C, Tq]`, `k` is `[C, Tk]`, `v` is `[Cv, Tk]`; channels split evenly
/// into `heads` groups and results are concatenated back to `[Cv, Tq]`.
pub fn attention(q: &Tensor2, k: &Tensor2, v: &Tensor2, heads: usize) -> Result<Tensor2> {
    attention_tallied(q, k, v, heads, &mut MacTally::new())
}

pub fn attention_tallied(
    q: &Tensor2,
    k: &Tensor2,
    v: &Tensor2,
    heads: usize,
    tally: &mut MacTally,
) -> Result<Tensor2> {
    check_attention(q, k, Some(v), heads)?;
    let weights = head_weights(q, k, heads, tally);
    let (tq, tk) = (q.cols(), k.cols());
    let dv = v.rows() / heads;
    let mut out = Tensor2::zeros(v.rows(), tq);
    for (h, w) in weights.iter().enumerate() {
        for c in h * dv..(h + 1) * dv {
            let vr = v.row(c);
            for t in 0..tq {
                let wr = &w[t * tk..(t + 1) * tk];
                let mut acc = 0.0f64;
                for (a, &b) in wr.iter().zip(vr) {
                    acc += a * b as f64;
                }
                out.set(c, t, acc as f32);
            }
        }
    }
    tally.add((v.rows() * tq * tk) as u64);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, v: &[f32]) -> Tensor2 {
        Tensor2::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn conv1d_identity_tap_is_identity() {
        let x = t2(1, 5, &[1.0, -2.0, 3.5, 0.25, 7.0]);
        let w = Tensor::new(vec![1, 1, 3], vec![0.0, 0.0, 1.0]).unwrap();
        let y = conv1d(&x, &w, &[0.0], &ConvSpec::new(1, 1, 3, 1, 1), 2, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv1d_zero_input_gives_zero_output_of_right_length() {
        let x = Tensor2::zeros(2, 10);
        let w = Tensor::new(vec![3, 2, 3], vec![0.7; 18]).unwrap();
        let spec = ConvSpec::new(2, 3, 3, 2, 2);
        let y = conv1d(&x, &w, &[0.0; 3], &spec, 4, 0).unwrap();
        assert_eq!(y.cols(), (14 - 5) / 2 + 1);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv1d_rejects_bad_shapes() {
        let x = Tensor2::zeros(2, 4);
        let w = Tensor::zeros(vec![1, 2, 3]);
        let spec = ConvSpec::new(2, 1, 3, 1, 1);
        assert!(conv1d(&Tensor2::zeros(3, 4), &w, &[0.0], &spec, 0, 0).is_err());
        assert!(conv1d(&x, &Tensor::zeros(vec![1, 2, 2]), &[0.0], &spec, 0, 0).is_err());
        assert!(conv1d(&x, &w, &[0.0, 0.0], &spec, 0, 0).is_err());
        assert!(conv1d(&Tensor2::zeros(2, 0), &w, &[0.0], &spec, 2, 0).is_err());
        assert!(conv1d(&Tensor2::zeros(2, 2), &w, &[0.0], &spec, 0, 0).is_err());
    }

    #[test]
    fn conv_transpose_single_frame() {
        let x = t2(1, 1, &[2.5]);
        let w = Tensor::new(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let y = conv_transpose1d(&x, &w, &[0.0], &ConvSpec::new(1, 1, 3, 2, 1)).unwrap();
        assert_eq!(y.data(), &[2.5, 2.5, 2.5]);
    }

    #[test]
    fn conv_transpose_overlap_sums() {
        let x = t2(1, 2, &[3.0, 5.0]);
        let w = Tensor::new(vec![1, 1, 3], vec![0.5, 2.0, -1.0]).unwrap();
        let y = conv_transpose1d(&x, &w, &[0.0], &ConvSpec::new(1, 1, 3, 2, 1)).unwrap();
        assert_eq!(y.cols(), 5);
        // Sample 2 receives frame0 * w[2] + frame1 * w[0].
        assert_eq!(y.get(0, 2), 3.0 * -1.0 + 5.0 * 0.5);
        assert_eq!(y.data(), &[1.5, 6.0, -0.5, 10.0, -5.0]);
    }

    #[test]
    fn conv_transpose_zero_in_zero_out() {
        let x = Tensor2::zeros(4, 6);
        let w = Tensor::new(vec![4, 2, 5], vec![0.3; 40]).unwrap();
        let y = conv_transpose1d(&x, &w, &[0.0; 2], &ConvSpec::new(4, 2, 5, 3, 1)).unwrap();
        assert_eq!(y.cols(), 5 * 3 + 5);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_constant_frame_is_zero() {
        let x = t2(4, 1, &[3.0; 4]);
        let y = layer_norm(&x, &[1.0; 4], &[0.0; 4], LAYER_NORM_EPS).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_two_channels() {
        let x = t2(2, 1, &[1.0, -1.0]);
        let y = layer_norm(&x, &[1.0; 2], &[0.0; 2], LAYER_NORM_EPS).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.get(0, 0) as f64 - expect).abs() < 1e-7);
        assert!((y.get(1, 0) as f64 + expect).abs() < 1e-7);
    }

    #[test]
    fn layer_norm_rejects_empty() {
        assert!(layer_norm(&Tensor2::zeros(0, 3), &[], &[], 1e-5).is_err());
    }

    #[test]
    fn linear_identity_and_relu() {
        let x = t2(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut eye = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(linear(&x, &eye, &[0.0; 3]).unwrap(), x);
        let r = relu(&t2(1, 3, &[-1.0, 0.0, 2.0]));
        assert_eq!(r.data(), &[0.0, 0.0, 2.0]);
        assert!(linear(&x, &Tensor::zeros(vec![3, 2]), &[0.0; 3]).is_err());
    }

    #[test]
    fn attention_single_key_returns_value() {
        let q = Tensor2::from_fn(4, 3, |r, c| (r as f32) - c as f32);
        let k = t2(4, 1, &[0.1, 0.2, 0.3, 0.4]);
        let v = t2(2, 1, &[7.0, -3.0]);
        let out = attention(&q, &k, &v, 2).unwrap();
        for t in 0..3 {
            assert_eq!(out.get(0, t), 7.0);
            assert_eq!(out.get(1, t), -3.0);
        }
    }

    #[test]
    fn attention_rejects_indivisible_heads() {
        let q = Tensor2::zeros(6, 2);
        assert!(attention(&q, &q, &q, 4).is_err());
        assert!(attention(&q, &q, &Tensor2::zeros(6, 3), 2).is_err());
    }

    #[test]
    fn tally_matches_conv_work() {
        let x = Tensor2::zeros(3, 20);
        let w = Tensor::zeros(vec![5, 3, 3]);
        let mut tally = MacTally::new();
        let spec = ConvSpec::new(3, 5, 3, 1, 4);
        let y = conv1d_tallied(&x, &w, &[0.0; 5], &spec, 8, 0, &mut tally).unwrap();
        assert_eq!(y.cols(), 20);
        assert_eq!(tally.get(), 5 * 3 * 3 * 20);
    }
}
