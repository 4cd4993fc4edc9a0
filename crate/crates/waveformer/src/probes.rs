//! Property probes run by `waveformer verify` against a concrete model.

use std::fmt;
use std::sync::Arc;

use waveformer_core::config::{model_macs_per_chunk, receptive_field_frames};
use waveformer_core::decoder::{decode_chunk, embed_query, DecoderCache};
use waveformer_core::encoder::{encode_chunk, EncoderState, EncoderWeights};
use waveformer_core::rng::SplitMix64;
use waveformer_core::{offline_forward, MacTally, Model, QueryVector, StreamSession, Tensor2};

use crate::error::Result;

pub const EQUIV_TOLERANCE: f32 = 1e-4;
pub const CAUSALITY_PROBES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for ProbeResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{}: {verdict} ({})", self.name, self.detail)
    }
}

fn result(name: &'static str, passed: bool, detail: String) -> ProbeResult {
    ProbeResult { name, passed, detail }
}

/// A tone plus noise, the kind of mixture the model separates.
pub fn mixture(seed: u64, len: usize, sample_rate: usize) -> Vec<f32> {
    let mut r = SplitMix64::new(seed);
    let freq = 220.0 + 660.0 * r.next_f32() as f64;
    (0..len)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            (0.3 * (2.0 * std::f64::consts::PI * freq * t).sin()) as f32 + r.uniform(0.2)
        })
        .collect()
}

/// Two-class query derived from the seed (one class when only one exists).
pub fn seeded_query(seed: u64, num_classes: usize) -> QueryVector {
    let a = (seed % num_classes as u64) as usize;
    let b = ((seed.wrapping_mul(7) + 3) % num_classes as u64) as usize;
    QueryVector::multi_hot(num_classes, &[a, b]).expect("indices are in range")
}

fn stream_all(model: &Arc<Model>, q: &QueryVector, x: &[f32]) -> Result<Vec<f32>> {
    let mut s = StreamSession::new(model.clone(), q)?;
    let mut out = s.push_samples(x)?;
    out.extend(s.flush()?);
    Ok(out)
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

pub fn stream_offline_equiv(model: &Arc<Model>, seed: u64, seconds: f64) -> Result<ProbeResult> {
    let cfg = model.config();
    let n = ((seconds * cfg.sample_rate as f64) as usize).max(1);
    let x = mixture(seed, n, cfg.sample_rate);
    let q = seeded_query(seed, cfg.num_classes);
    let streamed = stream_all(model, &q, &x)?;
    let offline = offline_forward(model, &x, &q)?;
    let d = max_abs_diff(&streamed, &offline);
    let ok = streamed.len() == offline.len() && d < EQUIV_TOLERANCE;
    Ok(result("stream_offline_equiv", ok, format!("max_diff {d:.3e} < {EQUIV_TOLERANCE:e}")))
}

pub fn chunk_causality(model: &Arc<Model>, seed: u64) -> Result<ProbeResult> {
    let cfg = model.config();
    let (s, la) = (cfg.samples_per_chunk(), cfg.lookahead_samples());
    let chunks = 8;
    let x = mixture(seed ^ 0xca05a1, chunks * s, cfg.sample_rate);
    let q = seeded_query(seed, cfg.num_classes);
    let base = stream_all(model, &q, &x)?;
    let mut r = SplitMix64::new(seed);
    let mut changed = 0;
    for _ in 0..CAUSALITY_PROBES {
        let k = (r.next_u64() % (chunks as u64 - 1)) as usize;
        let horizon = (k + 1) * s + la;
        let pos = horizon + (r.next_u64() % (x.len() - horizon) as u64) as usize;
        let mut p = x.clone();
        p[pos] += 0.5 + r.next_f32();
        let out = stream_all(model, &q, &p)?;
        if out[..(k + 1) * s] != base[..(k + 1) * s] {
            changed += 1;
        }
    }
    Ok(result(
        "chunk_causality",
        changed == 0,
        format!("{changed}/{CAUSALITY_PROBES} probes changed an emitted chunk"),
    ))
}

fn last_chunk(y: &Tensor2, k: usize, w: &EncoderWeights, bump: Option<usize>) -> Result<Tensor2> {
    let mut y = y.clone();
    if let Some(p) = bump {
        // One channel only: a shift shared by every channel is removed by the norm.
        y.set(0, p, y.get(0, p) + 1.0);
    }
    let mut st = EncoderState::new(w);
    let mut tally = MacTally::new();
    let mut last = None;
    for c in 0..y.cols() / k {
        last = Some(encode_chunk(&y.slice_cols(c * k, (c + 1) * k), &mut st, w, &mut tally)?);
    }
    Ok(last.expect("at least one chunk"))
}

/// Bitwise invariance of the current chunk's encoding to latent frames more
/// than `R` in the past, and sensitivity at exactly `R`.
///
/// Sensitivity is checked on a copy of the encoder with unit norm gains, zero
/// norm biases and doubled conv weights: with arbitrary weights the longest
/// path can shrink below `f32` resolution even though it exists.
pub fn receptive_field(model: &Arc<Model>, seed: u64) -> Result<ProbeResult> {
    let cfg = model.config();
    let rf = receptive_field_frames(cfg.kernel, cfg.layers)? as usize;
    let k = cfg.chunk_frames;
    let chunks = (rf + 3).div_ceil(k) + 1;
    let first = (chunks - 1) * k;
    let mut r = SplitMix64::new(seed ^ 0x4ecef1e1d);
    let y = Tensor2::from_fn(cfg.enc_dim, chunks * k, |_, _| r.uniform(1.0));

    let w = &model.encoder;
    let base = last_chunk(&y, k, w, None)?;
    let beyond_1 = last_chunk(&y, k, w, Some(first - rf - 1))? == base;
    let beyond_2 = last_chunk(&y, k, w, Some(first - rf - 2))? == base;

    let mut generic = w.clone();
    for l in &mut generic.layers {
        l.norm.gain.fill(1.0);
        l.norm.bias.fill(0.0);
        l.conv_weight.data_mut().iter_mut().for_each(|v| *v *= 2.0);
    }
    let gbase = last_chunk(&y, k, &generic, None)?;
    let reach = last_chunk(&y, k, &generic, Some(first - rf))?.max_abs_diff(&gbase);

    Ok(result(
        "receptive_field",
        beyond_1 && beyond_2 && reach > 0.0,
        format!(
            "R={rf}: invariant at {} and {} frames back: {}; change at {rf} frames back {reach:.3e}",
            rf + 1,
            rf + 2,
            beyond_1 && beyond_2
        ),
    ))
}

/// The mask for chunk `k` must not depend on encoded chunks before `k - 1`.
pub fn decoder_window(model: &Arc<Model>, seed: u64) -> Result<ProbeResult> {
    let cfg = model.config();
    let w = &model.decoder;
    let l = embed_query(&seeded_query(seed, cfg.num_classes), &w.embed)?;
    let mut r = SplitMix64::new(seed ^ 0xdec0de);
    let mut chunk = |scale: f32| Tensor2::from_fn(cfg.enc_dim, cfg.chunk_frames, |_, _| r.uniform(scale));
    let chunks: Vec<Tensor2> = (0..6).map(|_| chunk(1.0)).collect();
    let run = |seq: &[Tensor2]| -> Result<Tensor2> {
        let mut cache = DecoderCache::zeros(cfg.dec_dim, cfg.chunk_frames);
        let mut tally = MacTally::new();
        let mut last = None;
        for e in seq {
            last = Some(decode_chunk(e, &mut cache, &l, w, &mut tally)?);
        }
        Ok(last.expect("non-empty"))
    };
    let base = run(&chunks)?;
    let mut leaks = 0;
    for j in 0..4 {
        let mut alt = chunks.clone();
        alt[j] = chunk(4.0);
        if run(&alt)? != base {
            leaks += 1;
        }
    }
    let mut alt = chunks.clone();
    alt[4] = chunk(4.0);
    let prev_matters = run(&alt)? != base;
    Ok(result(
        "decoder_window",
        leaks == 0 && prev_matters,
        format!("{leaks}/4 older chunks changed m_k; previous chunk matters: {prev_matters}"),
    ))
}

pub fn push_granularity(model: &Arc<Model>, seed: u64) -> Result<ProbeResult> {
    let cfg = model.config();
    let x = mixture(seed ^ 0x9a1, 3 * cfg.samples_per_chunk() + 77, cfg.sample_rate);
    let q = seeded_query(seed, cfg.num_classes);
    let whole = stream_all(model, &q, &x)?;
    let mut s = StreamSession::new(model.clone(), &q)?;
    let mut single = Vec::new();
    for v in &x {
        single.extend(s.push_samples(std::slice::from_ref(v))?);
    }
    single.extend(s.flush()?);
    let same = single == whole;
    Ok(result("push_granularity", same, format!("single-sample pushes bitwise equal: {same}")))
}

pub fn length_preservation(model: &Arc<Model>, seed: u64) -> Result<ProbeResult> {
    let cfg = model.config();
    let s = cfg.samples_per_chunk();
    let q = seeded_query(seed, cfg.num_classes);
    let lengths = [0, 1, s - 1, s, s + cfg.lookahead_samples(), 1000, 2 * s + 5];
    let mut bad = Vec::new();
    for n in lengths {
        let out = stream_all(model, &q, &mixture(seed + n as u64, n, cfg.sample_rate))?;
        if out.len() != n {
            bad.push(format!("{n}->{}", out.len()));
        }
    }
    Ok(result(
        "length_preservation",
        bad.is_empty(),
        if bad.is_empty() { format!("{} lengths preserved", lengths.len()) } else { bad.join(", ") },
    ))
}

pub fn mac_count(model: &Arc<Model>, seed: u64) -> Result<ProbeResult> {
    let cfg = model.config();
    let mut s = StreamSession::new(model.clone(), &seeded_query(seed, cfg.num_classes))?;
    s.push_samples(&mixture(seed, 2 * cfg.samples_per_chunk() + cfg.lookahead_samples(), cfg.sample_rate))?;
    let measured = s.macs() / s.chunks_processed().max(1);
    let expect = model_macs_per_chunk(cfg).total();
    Ok(result("mac_count", measured == expect, format!("measured {measured}, closed form {expect}")))
}

/// Runs every probe in a fixed order.
pub fn run_all(model: &Arc<Model>, seed: u64, seconds: f64) -> Result<Vec<ProbeResult>> {
    Ok(vec![
        stream_offline_equiv(model, seed, seconds)?,
        chunk_causality(model, seed)?,
        receptive_field(model, seed)?,
        decoder_window(model, seed)?,
        push_granularity(model, seed)?,
        length_preservation(model, seed)?,
        mac_count(model, seed)?,
    ])
}
