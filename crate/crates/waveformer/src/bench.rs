//! Per-chunk wall-clock benchmark.
//!
//! A session is primed so the first chunk has been emitted, then each timed
//! iteration pushes exactly one chunk of `S` samples and measures the call.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use waveformer_core::rng::SplitMix64;
use waveformer_core::{Model, QueryVector, StreamSession};

use crate::error::Result;

pub const DEFAULT_WARMUP: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config_id: String,
    pub chunk_samples: usize,
    pub chunk_duration_ms: f64,
    pub iterations: usize,
    pub warmup: usize,
    pub mean_us: f64,
    pub median_us: f64,
    pub p95_us: f64,
    pub rtf: f64,
    pub macs_per_chunk: u64,
    pub threads: usize,
}

/// Processing time over chunk duration, both in milliseconds.
pub fn real_time_factor(mean_ms: f64, chunk_ms: f64) -> f64 {
    mean_ms / chunk_ms
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Times `iterations` single-chunk pushes after `warmup` untimed ones.
pub fn bench_rtf(model: Arc<Model>, iterations: usize, warmup: usize) -> Result<BenchReport> {
    let iterations = iterations.max(1);
    let cfg = *model.config();
    let s = cfg.samples_per_chunk();
    let query = QueryVector::one_hot(cfg.num_classes, 0)?;
    let mut session = StreamSession::new(model, &query)?;

    let mut rng = SplitMix64::new(0x5eed);
    let mut chunk = || (0..s).map(|_| rng.uniform(0.5)).collect::<Vec<f32>>();
    let mut prime = chunk();
    prime.extend((0..cfg.lookahead_samples()).map(|i| (i as f32 * 0.01).sin() * 0.5));
    session.push_samples(&prime)?;
    for _ in 0..warmup {
        session.push_samples(&chunk())?;
    }

    let inputs: Vec<Vec<f32>> = (0..iterations).map(|_| chunk()).collect();
    let macs_before = session.macs();
    let mut times_us = Vec::with_capacity(iterations);
    for input in &inputs {
        let start = Instant::now();
        let out = session.push_samples(input)?;
        times_us.push(start.elapsed().as_secs_f64() * 1e6);
        debug_assert_eq!(out.len(), s);
    }
    let macs_per_chunk = (session.macs() - macs_before) / iterations as u64;

    let mean_us = times_us.iter().sum::<f64>() / iterations as f64;
    times_us.sort_by(f64::total_cmp);
    let chunk_duration_ms = s as f64 * 1000.0 / cfg.sample_rate as f64;
    Ok(BenchReport {
        config_id: format!(
            "L{}-E{}-D{}-K{}-M{}-P{}",
            cfg.stride, cfg.enc_dim, cfg.dec_dim, cfg.chunk_frames, cfg.layers, cfg.kernel
        ),
        chunk_samples: s,
        chunk_duration_ms,
        iterations,
        warmup,
        mean_us,
        median_us: median(&times_us),
        p95_us: percentile(&times_us, 0.95),
        rtf: real_time_factor(mean_us / 1000.0, chunk_duration_ms),
        macs_per_chunk,
        threads: 1,
    })
}

impl BenchReport {
    /// One `key=value` pair per line.
    pub fn to_kv(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut out = String::new();
        for (k, v) in value.as_object().expect("report is an object") {
            match v {
                serde_json::Value::String(s) => out.push_str(&format!("{k}={s}\n")),
                other => out.push_str(&format!("{k}={other}\n")),
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rtf_arithmetic() {
        assert!((real_time_factor(4.715, 9.43) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn order_statistics() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(median(&v), 5.5);
        assert_eq!(percentile(&v, 0.95), 10.0);
        assert_eq!(percentile(&v[..1], 0.95), 1.0);
    }
}
