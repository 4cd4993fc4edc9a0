//! Typed view of a validated [`NamedTensorSet`].

use alloc::format;
use alloc::vec::Vec;

use crate::checkpoint::NamedTensorSet;
use crate::config::ModelConfig;
use crate::decoder::{AttentionWeights, DecoderWeights, QueryEmbedder};
use crate::encoder::{DccLayerWeights, EncoderWeights};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

/// Weight and bias of an affine map, 1x1 convolution or convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

/// Layer normalization gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gain: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Complete parameter set, ready for inference and shareable across sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    /// Strided analysis convolution, `[E, 1, 3L]`.
    pub front_end: Affine,
    pub encoder: EncoderWeights,
    pub decoder: DecoderWeights,
    /// Transposed synthesis convolution, `[E, 1, 3L]`.
    pub synthesis: Affine,
}

struct Binder<'a> {
    set: &'a NamedTensorSet,
}

impl Binder<'_> {
    fn tensor(&self, name: &str) -> Result<Tensor> {
        self.set
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Validation(alloc::vec![format!("missing tensor `{name}`")]))
    }

    fn vector(&self, name: &str) -> Result<Vec<f32>> {
        Ok(self.tensor(name)?.data().to_vec())
    }

    fn affine(&self, prefix: &str) -> Result<Affine> {
        Ok(Affine {
            weight: self.tensor(&format!("{prefix}.w"))?,
            bias: self.vector(&format!("{prefix}.b"))?,
        })
    }

    fn norm(&self, prefix: &str) -> Result<Norm> {
        Ok(Norm {
            gain: self.vector(&format!("{prefix}.g"))?,
            bias: self.vector(&format!("{prefix}.b"))?,
        })
    }

    fn attention(&self, prefix: &str) -> Result<AttentionWeights> {
        Ok(AttentionWeights {
            q: self.affine(&format!("{prefix}.q"))?,
            k: self.affine(&format!("{prefix}.k"))?,
            v: self.affine(&format!("{prefix}.v"))?,
            o: self.affine(&format!("{prefix}.o"))?,
        })
    }
}

impl Model {
    /// Validates `set` against its header and binds every tensor.
    pub fn from_tensors(set: &NamedTensorSet) -> Result<Self> {
        set.validate()?;
        let cfg = *set.config();
        let b = Binder { set };
        let layers = (0..cfg.layers)
            .map(|i| {
                let conv = b.affine(&format!("enc.layer{i}.conv"))?;
                Ok(DccLayerWeights {
                    conv_weight: conv.weight,
                    conv_bias: conv.bias,
                    norm: b.norm(&format!("enc.layer{i}.norm"))?,
                    dilation: cfg.dilation(i),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder = DecoderWeights {
            embed: QueryEmbedder {
                fc1: b.affine("emb.fc1")?,
                fc2: b.affine("emb.fc2")?,
                fc3: b.affine("emb.fc3")?,
            },
            proj_self: b.affine("dec.proj_self")?,
            proj_cross: b.affine("dec.proj_cross")?,
            norm1: b.norm("dec.xform.norm1")?,
            norm2: b.norm("dec.xform.norm2")?,
            norm3: b.norm("dec.xform.norm3")?,
            self_attn: b.attention("dec.xform.self_attn")?,
            cross_attn: b.attention("dec.xform.cross_attn")?,
            ffn1: b.affine("dec.xform.ffn.fc1")?,
            ffn2: b.affine("dec.xform.ffn.fc2")?,
            proj_out: b.affine("dec.proj_out")?,
            heads: cfg.heads,
        };
        Ok(Self {
            config: cfg,
            front_end: b.affine("in_conv")?,
            encoder: EncoderWeights { layers },
            decoder,
            synthesis: b.affine("out_conv")?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn front_end_spec(&self) -> ConvSpec {
        let c = &self.config;
        ConvSpec::new(1, c.enc_dim, c.front_kernel(), c.stride, 1)
    }

    pub fn synthesis_spec(&self) -> ConvSpec {
        let c = &self.config;
        ConvSpec::new(c.enc_dim, 1, c.front_kernel(), c.stride, 1)
    }
}
