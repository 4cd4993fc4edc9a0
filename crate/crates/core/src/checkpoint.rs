//! Named-tensor checkpoints.
//!
//! Byte layout, all integers and floats little-endian:
//!
//! ```text
//! "WVFM"                      magic, 4 bytes
//! u32                         format version (1)
//! u32 x 11                    config: L E D K M P N_c heads ffn_dim embed_hidden F_s
//! u32                         entry count
//! per entry:
//!   u32, [u8]                 name length, UTF-8 name
//!   u32, u32 x ndim           ndim, dims
//!   f32 x prod(dims)          payload
//! ```
//!
//! Entries are written in name order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"WVFM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensorSet {
    config: ModelConfig,
    entries: BTreeMap<String, Tensor>,
}

impl NamedTensorSet {
    pub fn new(config: ModelConfig) -> Self {
        Self { config, entries: BTreeMap::new() }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Replaces the header. Only geometry that leaves tensor shapes intact
    /// should change this way; [`validate`](Self::validate) catches the rest.
    pub fn set_config(&mut self, config: ModelConfig) {
        self.config = config;
    }

    /// Inserts or replaces `name`, returning the previous tensor.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.entries.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.entries.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks the set against the architecture its header describes,
    /// reporting every missing, misshapen or unexpected tensor at once.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let expected = parameter_shapes(&self.config);
        let mut problems = Vec::new();
        for (name, dims) in &expected {
            match self.entries.get(name) {
                None => problems.push(format!("missing tensor `{name}`")),
                Some(t) if t.dims() != dims.as_slice() => problems.push(format!(
                    "tensor `{name}` has dims {:?}, expected {dims:?}",
                    t.dims()
                )),
                Some(_) => {}
            }
        }
        for name in self.entries.keys() {
            if !expected.iter().any(|(n, _)| n == name) {
                problems.push(format!("unexpected tensor `{name}`"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.entries.iter().map(|(n, t)| 12 + n.len() + 4 * (t.dims().len() + t.len())).sum();
        let mut out = Vec::with_capacity(60 + payload);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        for v in self.config.to_fields() {
            put_u32(&mut out, v as u32);
        }
        put_u32(&mut out, self.entries.len() as u32);
        for (name, t) in &self.entries {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.dims().len() as u32);
            for &d in t.dims() {
                put_u32(&mut out, d as u32);
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses the byte layout. Structural problems are reported with the
    /// offset at which decoding failed; architecture checks are left to
    /// [`validate`](Self::validate).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, "bad magic, expected `WVFM`"));
        }
        let version_at = r.pos;
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(version_at, format!("unsupported format version {version}")));
        }
        let mut fields = [0usize; 11];
        for f in fields.iter_mut() {
            *f = r.u32("config field")? as usize;
        }
        let config = ModelConfig::from_fields(fields);
        let count = r.u32("entry count")?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let name_at = r.pos;
            let name_len = r.u32("name length")? as usize;
            let name = core::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::format(name_at + 4, "tensor name is not UTF-8"))?
                .to_string();
            let ndim = r.u32("ndim")? as usize;
            let mut dims = Vec::with_capacity(ndim.min(8));
            let mut n: usize = 1;
            for _ in 0..ndim {
                let d = r.u32("dim")? as usize;
                n = n
                    .checked_mul(d)
                    .ok_or_else(|| Error::format(r.pos - 4, "tensor size overflows"))?;
                dims.push(d);
            }
            let raw = r.take(
                n.checked_mul(4).ok_or_else(|| Error::format(r.pos, "tensor size overflows"))?,
                "payload",
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let tensor = Tensor::new(dims, data)?;
            if entries.insert(name.clone(), tensor).is_some() {
                return Err(Error::format(name_at, format!("duplicate tensor `{name}`")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos, "trailing bytes after last entry"));
        }
        Ok(Self { config, entries })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.pos, format!("truncated while reading {what}"))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Every parameter the architecture needs, with its shape.
///
/// Convolution weights are `[out, in, kernel]`, except the transposed
/// synthesis convolution which is `[in, out, kernel]`. Affine and 1x1
/// projection weights are `[out, in]`.
pub fn parameter_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (e, d, f, h) = (cfg.enc_dim, cfg.dec_dim, cfg.ffn_dim, cfg.embed_hidden);
    let mut v: Vec<(String, Vec<usize>)> = Vec::new();
    let mut push = |name: String, dims: Vec<usize>| v.push((name, dims));

    push("in_conv.w".into(), vec![e, 1, cfg.front_kernel()]);
    push("in_conv.b".into(), vec![e]);
    for i in 0..cfg.layers {
        push(format!("enc.layer{i}.conv.w"), vec![e, e, cfg.kernel]);
        push(format!("enc.layer{i}.conv.b"), vec![e]);
        push(format!("enc.layer{i}.norm.g"), vec![e]);
        push(format!("enc.layer{i}.norm.b"), vec![e]);
    }
    push("emb.fc1.w".into(), vec![h, cfg.num_classes]);
    push("emb.fc1.b".into(), vec![h]);
    push("emb.fc2.w".into(), vec![h, h]);
    push("emb.fc2.b".into(), vec![h]);
    push("emb.fc3.w".into(), vec![e, h]);
    push("emb.fc3.b".into(), vec![e]);
    for proj in ["proj_self", "proj_cross"] {
        push(format!("dec.{proj}.w"), vec![d, e]);
        push(format!("dec.{proj}.b"), vec![d]);
    }
    for n in 1..=3 {
        push(format!("dec.xform.norm{n}.g"), vec![d]);
        push(format!("dec.xform.norm{n}.b"), vec![d]);
    }
    for block in ["self_attn", "cross_attn"] {
        for p in ["q", "k", "v", "o"] {
            push(format!("dec.xform.{block}.{p}.w"), vec![d, d]);
            push(format!("dec.xform.{block}.{p}.b"), vec![d]);
        }
    }
    push("dec.xform.ffn.fc1.w".into(), vec![f, d]);
    push("dec.xform.ffn.fc1.b".into(), vec![f]);
    push("dec.xform.ffn.fc2.w".into(), vec![d, f]);
    push("dec.xform.ffn.fc2.b".into(), vec![d]);
    push("dec.proj_out.w".into(), vec![e, d]);
    push("dec.proj_out.b".into(), vec![e]);
    push("out_conv.w".into(), vec![e, 1, cfg.front_kernel()]);
    push("out_conv.b".into(), vec![1]);
    v
}

/// Uniform bound `sqrt(6 / (fan_in + fan_out))` for a tensor of these dims.
///
/// `[a, b, k]` has fan-in `b * k` and fan-out `a * k`; `[out, in]` has fan-in
/// `in` and fan-out `out`; a vector of length `n` uses `n` for both.
pub fn init_bound(dims: &[usize]) -> f32 {
    let (fan_in, fan_out) = match *dims {
        [n] => (n, n),
        [out, inp] => (inp, out),
        [a, b, k] => (b * k, a * k),
        _ => {
            let n: usize = dims.iter().product();
            (n, n)
        }
    };
    libm::sqrt(6.0 / (fan_in + fan_out).max(1) as f64) as f32
}

/// Deterministic random parameters for `cfg`.
///
/// Each tensor draws from its own SplitMix64 stream keyed by `(seed, name)`,
/// uniform in `[-init_bound, init_bound)`. Identical inputs give identical
/// bytes on every platform.
pub fn random_init(cfg: &ModelConfig, seed: u64) -> Result<NamedTensorSet> {
    cfg.validate()?;
    let mut set = NamedTensorSet::new(*cfg);
    for (name, dims) in parameter_shapes(cfg) {
        let bound = init_bound(&dims);
        let mut rng = SplitMix64::for_name(seed, &name);
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| rng.uniform(bound)).collect();
        set.insert(name, Tensor::new(dims, data)?);
    }
    Ok(set)
}
