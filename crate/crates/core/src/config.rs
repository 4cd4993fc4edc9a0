//! Architecture hyperparameters and the closed-form geometry derived from them.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Every hyperparameter of the model.
///
/// Defaults: stride 32, encoder width 512, decoder width 256, 13 frames per
/// chunk, 10 DCC layers of kernel 3, 41 query classes, 8 heads, FFN width
/// 1024, query-embedding hidden width 512, 44.1 kHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Front-end stride in samples (`L`). The front-end kernel is `3 * stride`.
    pub stride: usize,
    /// Encoder latent width (`E`).
    pub enc_dim: usize,
    /// Decoder width (`D`), at most `enc_dim`.
    pub dec_dim: usize,
    /// Latent frames per chunk (`K`).
    pub chunk_frames: usize,
    /// Number of dilated causal convolution layers (`M`).
    pub layers: usize,
    /// DCC kernel size (`P`).
    pub kernel: usize,
    /// Number of query classes (`N_c`).
    pub num_classes: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub embed_hidden: usize,
    /// Sample rate in Hz. Metadata only; the arithmetic is rate agnostic.
    pub sample_rate: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stride: 32,
            enc_dim: 512,
            dec_dim: 256,
            chunk_frames: 13,
            layers: 10,
            kernel: 3,
            num_classes: 41,
            heads: 8,
            ffn_dim: 1024,
            embed_hidden: 512,
            sample_rate: 44_100,
        }
    }
}

/// Keys accepted in a config text file, in checkpoint header order.
pub const CONFIG_KEYS: [&str; 11] =
    ["L", "E", "D", "K", "M", "P", "N_c", "heads", "ffn_dim", "embed_hidden", "F_s"];

const MAX_LAYERS: usize = 24;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = self.to_fields();
        for (key, v) in CONFIG_KEYS.iter().zip(fields) {
            if v == 0 {
                return Err(Error::invalid(format!("config: {key} must be >= 1")));
            }
        }
        if self.dec_dim > self.enc_dim {
            return Err(Error::invalid(format!(
                "config: decoder width D={} exceeds encoder width E={}",
                self.dec_dim, self.enc_dim
            )));
        }
        if !self.dec_dim.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "config: D={} not divisible by heads={}",
                self.dec_dim, self.heads
            )));
        }
        if self.kernel < 2 {
            return Err(Error::invalid("config: P must be >= 2"));
        }
        if self.layers > MAX_LAYERS {
            return Err(Error::invalid(format!("config: M must be <= {MAX_LAYERS}")));
        }
        Ok(())
    }

    /// Samples per chunk, `S = K * L`.
    pub fn samples_per_chunk(&self) -> usize {
        self.chunk_frames * self.stride
    }

    /// Future samples the front end needs beyond a chunk, `2L`.
    pub fn lookahead_samples(&self) -> usize {
        2 * self.stride
    }

    /// Front-end kernel width in samples, `3L`.
    pub fn front_kernel(&self) -> usize {
        3 * self.stride
    }

    /// Dilation of DCC layer `layer`: `2^layer`.
    pub fn dilation(&self, layer: usize) -> usize {
        1 << layer
    }

    /// Frames of left context DCC layer `layer` keeps between chunks.
    pub fn context_frames(&self, layer: usize) -> usize {
        (self.kernel - 1) * self.dilation(layer)
    }

    pub fn to_fields(&self) -> [usize; 11] {
        [
            self.stride,
            self.enc_dim,
            self.dec_dim,
            self.chunk_frames,
            self.layers,
            self.kernel,
            self.num_classes,
            self.heads,
            self.ffn_dim,
            self.embed_hidden,
            self.sample_rate,
        ]
    }

    pub fn from_fields(f: [usize; 11]) -> Self {
        Self {
            stride: f[0],
            enc_dim: f[1],
            dec_dim: f[2],
            chunk_frames: f[3],
            layers: f[4],
            kernel: f[5],
            num_classes: f[6],
            heads: f[7],
            ffn_dim: f[8],
            embed_hidden: f[9],
            sample_rate: f[10],
        }
    }

    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown keys are an error.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        Self::default().with_overrides(&parse_kv_text(text)?)
    }

    /// Copy of `self` with `overrides` (canonical key, value) applied, validated.
    pub fn with_overrides(&self, overrides: &[(&'static str, usize)]) -> Result<Self> {
        let mut fields = self.to_fields();
        for (key, value) in overrides {
            let idx = key_index(key).ok_or_else(|| Error::invalid(format!("config: unknown key `{key}`")))?;
            fields[idx] = *value;
        }
        let cfg = Self::from_fields(fields);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        for (key, v) in CONFIG_KEYS.iter().zip(self.to_fields()) {
            s.push_str(&format!("{key} = {v}\n"));
        }
        s
    }
}

/// Reads the `key = value` pairs of a config text without applying them.
/// Keys come back in canonical short form (`L`, `E`, ...), in file order.
pub fn parse_kv_text(text: &str) -> Result<Vec<(&'static str, usize)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::invalid(format!("config line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        let idx = key_index(key).ok_or_else(|| {
            Error::invalid(format!("config line {}: unknown key `{key}`", lineno + 1))
        })?;
        let value = value.trim().parse().map_err(|_| {
            Error::invalid(format!(
                "config line {}: `{}` is not a non-negative integer",
                lineno + 1,
                value.trim()
            ))
        })?;
        out.push((CONFIG_KEYS[idx], value));
    }
    Ok(out)
}

fn key_index(key: &str) -> Option<usize> {
    const ALIASES: [&str; 11] = [
        "stride",
        "enc_dim",
        "dec_dim",
        "chunk_frames",
        "layers",
        "kernel",
        "num_classes",
        "heads",
        "ffn_dim",
        "embed_hidden",
        "sample_rate",
    ];
    CONFIG_KEYS
        .iter()
        .position(|k| *k == key)
        .or_else(|| ALIASES.iter().position(|k| *k == key))
}

/// Past latent frames that can influence an output frame of an `layers`-deep
/// DCC stack with kernel size `kernel` and dilations `1, 2, ..., 2^(layers-1)`:
/// `(kernel - 1) * (2^layers - 1)`.
pub fn receptive_field_frames(kernel: usize, layers: usize) -> Result<u64> {
    if kernel < 2 {
        return Err(Error::invalid("receptive field: kernel size must be >= 2"));
    }
    if !(1..=62).contains(&layers) {
        return Err(Error::invalid("receptive field: layer count must be in 1..=62"));
    }
    Ok((kernel as u64 - 1) * ((1u64 << layers) - 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkGeometry {
    pub samples_per_chunk: usize,
    pub chunk_duration_ms: f64,
    pub lookahead_samples: usize,
    pub lookahead_ms: f64,
    pub receptive_field_frames: u64,
    pub receptive_field_seconds: f64,
}

pub fn chunk_geometry(cfg: &ModelConfig) -> Result<ChunkGeometry> {
    cfg.validate()?;
    let fs = cfg.sample_rate as f64;
    let rf = receptive_field_frames(cfg.kernel, cfg.layers)?;
    Ok(ChunkGeometry {
        samples_per_chunk: cfg.samples_per_chunk(),
        chunk_duration_ms: cfg.samples_per_chunk() as f64 * 1000.0 / fs,
        lookahead_samples: cfg.lookahead_samples(),
        lookahead_ms: cfg.lookahead_samples() as f64 * 1000.0 / fs,
        receptive_field_frames: rf,
        receptive_field_seconds: rf as f64 * cfg.stride as f64 / fs,
    })
}

// MAC counts below cover the products of convolutions, affine maps and
// attention only. Normalizations, activations, the mask product and the
// one-off query embedding are excluded.

/// Cost of one DCC layer on one chunk: `K * P * E^2`.
pub fn encoder_layer_macs(cfg: &ModelConfig) -> u64 {
    (cfg.chunk_frames * cfg.kernel * cfg.enc_dim * cfg.enc_dim) as u64
}

/// `M * K * P * E^2`.
pub fn encoder_macs_per_chunk(cfg: &ModelConfig) -> u64 {
    cfg.layers as u64 * encoder_layer_macs(cfg)
}

/// Cost of a chunk attending directly over `receptive_frames` past frames,
/// the alternative to a convolutional encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionMacs {
    /// Scores plus value mixing: `2 * K * R * D`.
    pub attention: u64,
    /// Query, key, value and output projections of the chunk's own frames
    /// (past keys and values cached): `4 * K * D^2`.
    pub projections: u64,
}

impl AttentionMacs {
    pub fn total(&self) -> u64 {
        self.attention + self.projections
    }
}

pub fn attention_macs_per_chunk(cfg: &ModelConfig, receptive_frames: u64) -> AttentionMacs {
    let (k, d) = (cfg.chunk_frames as u64, cfg.dec_dim as u64);
    AttentionMacs { attention: 2 * k * receptive_frames * d, projections: 4 * k * d * d }
}

/// Per-chunk MACs of every stage of the streaming model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelMacs {
    pub front_end: u64,
    pub encoder: u64,
    pub decoder: u64,
    pub synthesis: u64,
}

impl ModelMacs {
    pub fn total(&self) -> u64 {
        self.front_end + self.encoder + self.decoder + self.synthesis
    }
}

pub fn model_macs_per_chunk(cfg: &ModelConfig) -> ModelMacs {
    let k = cfg.chunk_frames as u64;
    let e = cfg.enc_dim as u64;
    let d = cfg.dec_dim as u64;
    let f = cfg.ffn_dim as u64;
    let window = 2 * k;
    // Query projection and output projection over K frames, key/value
    // projections over the 2K window, scores and mixing K x 2K x D.
    let attention_block = 2 * k * d * d + 2 * window * d * d + 2 * k * window * d;
    let decoder = 2 * k * e * d + 2 * attention_block + 2 * k * d * f + k * d * e;
    ModelMacs {
        front_end: k * e * cfg.front_kernel() as u64,
        encoder: encoder_macs_per_chunk(cfg),
        decoder,
        synthesis: k * e * cfg.front_kernel() as u64,
    }
}
