//! Query embedding and the query-conditioned transformer decoder.
//!
//! For an encoded chunk `e` and query embedding `l`:
//!
//! ```text
//! e'  = e * l                        (broadcast over frames)
//! pe' = relu(proj_self(e'))          self-attention stream
//! pe  = relu(proj_cross(e))          cross-attention memory
//! x   = pe' + SelfAttn(n1(pe'), n1([pe'_prev, pe']))
//! x   = x + CrossAttn(n2(x), [pe_prev, pe])
//! pm  = x + Ffn(n3(x))
//! m   = relu(proj_out(pm)) + e'
//! ```
//!
//! Attention windows span the previous chunk and the current one, so the mask
//! of chunk `k` never depends on anything older than chunk `k - 1`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{
    add, attention_tallied, layer_norm, linear_tallied, relu_in_place, scale_rows, LAYER_NORM_EPS,
};
use crate::model::{Affine, Norm};
use crate::tensor::{MacTally, Tensor2};

/// One-hot or multi-hot selection over the query classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryVector {
    bits: Vec<bool>,
}

impl QueryVector {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if !bits.iter().any(|&b| b) {
            return Err(Error::invalid("query selects no class"));
        }
        Ok(Self { bits })
    }

    /// Sets `classes` out of `num_classes`. Duplicates are harmless.
    pub fn multi_hot(num_classes: usize, classes: &[usize]) -> Result<Self> {
        let mut bits = alloc::vec![false; num_classes];
        for &c in classes {
            if c >= num_classes {
                return Err(Error::invalid(format!(
                    "class index {c} out of range for {num_classes} classes"
                )));
            }
            bits[c] = true;
        }
        Self::from_bits(bits)
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Result<Self> {
        Self::multi_hot(num_classes, &[class])
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    fn as_column(&self) -> Tensor2 {
        Tensor2::from_fn(self.bits.len(), 1, |r, _| if self.bits[r] { 1.0 } else { 0.0 })
    }
}

/// Query embedding `l`, one value per encoder channel.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding(pub Vec<f32>);

impl QueryEmbedding {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

/// Three affine layers with ReLU between them: `N_c -> H -> H -> E`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedder {
    pub fc1: Affine,
    pub fc2: Affine,
    pub fc3: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub q: Affine,
    pub k: Affine,
    pub v: Affine,
    pub o: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub embed: QueryEmbedder,
    /// Projects the query-conditioned encoding `e'` to `D`.
    pub proj_self: Affine,
    /// Projects the plain encoding `e` to `D`.
    pub proj_cross: Affine,
    pub norm1: Norm,
    pub norm2: Norm,
    pub norm3: Norm,
    pub self_attn: AttentionWeights,
    pub cross_attn: AttentionWeights,
    pub ffn1: Affine,
    pub ffn2: Affine,
    pub proj_out: Affine,
    pub heads: usize,
}

impl DecoderWeights {
    pub fn dec_dim(&self) -> usize {
        self.proj_self.weight.dims()[0]
    }

    pub fn enc_dim(&self) -> usize {
        self.proj_self.weight.dims()[1]
    }
}

fn affine(x: &Tensor2, a: &Affine, tally: &mut MacTally) -> Result<Tensor2> {
    linear_tallied(x, &a.weight, &a.bias, tally)
}

fn affine_relu(x: &Tensor2, a: &Affine, tally: &mut MacTally) -> Result<Tensor2> {
    let mut y = affine(x, a, tally)?;
    relu_in_place(&mut y);
    Ok(y)
}

fn norm(x: &Tensor2, n: &Norm) -> Result<Tensor2> {
    layer_norm(x, &n.gain, &n.bias, LAYER_NORM_EPS)
}

pub fn embed_query(query: &QueryVector, weights: &QueryEmbedder) -> Result<QueryEmbedding> {
    embed_query_tallied(query, weights, &mut MacTally::new())
}

pub fn embed_query_tallied(
    query: &QueryVector,
    weights: &QueryEmbedder,
    tally: &mut MacTally,
) -> Result<QueryEmbedding> {
    let classes = weights.fc1.weight.dims()[1];
    if query.len() != classes {
        return Err(Error::invalid(format!(
            "query has {} classes, model expects {classes}",
            query.len()
        )));
    }
    let h = affine_relu(&query.as_column(), &weights.fc1, tally)?;
    let h = affine_relu(&h, &weights.fc2, tally)?;
    let l = affine(&h, &weights.fc3, tally)?;
    Ok(QueryEmbedding(l.into_vec()))
}

/// Projected previous chunk, carried between decode steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderCache {
    prev_self: Tensor2,
    prev_cross: Tensor2,
}

impl DecoderCache {
    /// State before the first chunk: the window is padded with zero frames.
    pub fn zeros(dec_dim: usize, frames: usize) -> Self {
        Self { prev_self: Tensor2::zeros(dec_dim, frames), prev_cross: Tensor2::zeros(dec_dim, frames) }
    }

    /// Projected conditioned previous chunk `pe'_{k-1}`.
    pub fn prev_self(&self) -> &Tensor2 {
        &self.prev_self
    }

    /// Projected previous chunk `pe_{k-1}`.
    pub fn prev_cross(&self) -> &Tensor2 {
        &self.prev_cross
    }
}

fn attend(
    queries: &Tensor2,
    memory: &Tensor2,
    w: &AttentionWeights,
    heads: usize,
    tally: &mut MacTally,
) -> Result<Tensor2> {
    let q = affine(queries, &w.q, tally)?;
    let k = affine(memory, &w.k, tally)?;
    let v = affine(memory, &w.v, tally)?;
    let a = attention_tallied(&q, &k, &v, heads, tally)?;
    affine(&a, &w.o, tally)
}

struct Projected {
    conditioned: Tensor2,
    pe_self: Tensor2,
    pe_cross: Tensor2,
}

fn project(
    encoded: &Tensor2,
    l: &QueryEmbedding,
    w: &DecoderWeights,
    tally: &mut MacTally,
) -> Result<Projected> {
    if encoded.rows() != w.enc_dim() || encoded.cols() == 0 {
        return Err(Error::invalid(format!(
            "decoder: chunk is {}x{}, expected {} channels",
            encoded.rows(),
            encoded.cols(),
            w.enc_dim()
        )));
    }
    let conditioned = scale_rows(encoded, l.as_slice())?;
    let pe_self = affine_relu(&conditioned, &w.proj_self, tally)?;
    let pe_cross = affine_relu(encoded, &w.proj_cross, tally)?;
    Ok(Projected { conditioned, pe_self, pe_cross })
}

fn transform(
    p: &Projected,
    prev_self: &Tensor2,
    prev_cross: &Tensor2,
    w: &DecoderWeights,
    tally: &mut MacTally,
) -> Result<Tensor2> {
    let k = p.pe_self.cols();
    let self_window = norm(&prev_self.concat_cols(&p.pe_self)?, &w.norm1)?;
    let self_queries = self_window.slice_cols(self_window.cols() - k, self_window.cols());
    let sa = attend(&self_queries, &self_window, &w.self_attn, w.heads, tally)?;
    let x = add(&p.pe_self, &sa)?;

    let cross_window = prev_cross.concat_cols(&p.pe_cross)?;
    let ca = attend(&norm(&x, &w.norm2)?, &cross_window, &w.cross_attn, w.heads, tally)?;
    let x = add(&x, &ca)?;

    let h = affine_relu(&norm(&x, &w.norm3)?, &w.ffn1, tally)?;
    let ff = affine(&h, &w.ffn2, tally)?;
    let pm = add(&x, &ff)?;

    let m_proj = affine_relu(&pm, &w.proj_out, tally)?;
    add(&m_proj, &p.conditioned)
}

/// Produces the mask `m_k` for encoded chunk `e_k`, advancing `cache`.
pub fn decode_chunk(
    encoded: &Tensor2,
    cache: &mut DecoderCache,
    l: &QueryEmbedding,
    w: &DecoderWeights,
    tally: &mut MacTally,
) -> Result<Tensor2> {
    let p = project(encoded, l, w, tally)?;
    if cache.prev_self.rows() != p.pe_self.rows() || cache.prev_self.cols() != p.pe_self.cols() {
        return Err(Error::invalid(format!(
            "decoder: cache is {}x{}, chunk projects to {}x{}",
            cache.prev_self.rows(),
            cache.prev_self.cols(),
            p.pe_self.rows(),
            p.pe_self.cols()
        )));
    }
    let m = transform(&p, &cache.prev_self, &cache.prev_cross, w, tally)?;
    cache.prev_self = p.pe_self;
    cache.prev_cross = p.pe_cross;
    Ok(m)
}

/// Stateless form: projects the raw previous chunk afresh, or pads the window
/// with zero frames when `previous` is `None`.
pub fn decode_with_previous(
    encoded: &Tensor2,
    previous: Option<&Tensor2>,
    l: &QueryEmbedding,
    w: &DecoderWeights,
) -> Result<Tensor2> {
    let mut tally = MacTally::new();
    let p = project(encoded, l, w, &mut tally)?;
    let (prev_self, prev_cross) = match previous {
        Some(prev) => {
            if (prev.rows(), prev.cols()) != (encoded.rows(), encoded.cols()) {
                return Err(Error::invalid("decoder: previous chunk shape differs from current"));
            }
            let q = project(prev, l, w, &mut tally)?;
            (q.pe_self, q.pe_cross)
        }
        None => {
            let z = Tensor2::zeros(p.pe_self.rows(), p.pe_self.cols());
            (z.clone(), z)
        }
    };
    transform(&p, &prev_self, &prev_cross, w, &mut tally)
}
