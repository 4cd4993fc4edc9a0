//! Dilated causal convolution encoder.
//!
//! Layer `i` has dilation `2^i`. Each layer computes
//! `out = x + relu(conv(layer_norm([context, x])))` where `context` is the
//! last `(P - 1) * dilation` frames of the layer's input seen so far, so a
//! chunk can be encoded without revisiting earlier audio. After the step the
//! context becomes the rightmost frames of `[context, x]`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{add, conv1d_tallied, layer_norm, relu_in_place, LAYER_NORM_EPS};
use crate::model::Norm;
use crate::tensor::{ConvSpec, MacTally, Tensor, Tensor2};

#[derive(Debug, Clone, PartialEq)]
pub struct DccLayerWeights {
    /// `[E, E, P]`
    pub conv_weight: Tensor,
    pub conv_bias: Vec<f32>,
    pub norm: Norm,
    pub dilation: usize,
}

impl DccLayerWeights {
    pub fn channels(&self) -> usize {
        self.conv_weight.dims()[0]
    }

    pub fn kernel(&self) -> usize {
        self.conv_weight.dims()[2]
    }

    pub fn context_frames(&self) -> usize {
        (self.kernel() - 1) * self.dilation
    }

    fn spec(&self) -> ConvSpec {
        let c = self.channels();
        ConvSpec::new(c, c, self.kernel(), 1, self.dilation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub layers: Vec<DccLayerWeights>,
}

/// Retained left context of one layer, `E x (P - 1) * dilation`.
#[derive(Debug, Clone, PartialEq)]
pub struct DccLayerState {
    context: Tensor2,
}

impl DccLayerState {
    pub fn zeros(channels: usize, frames: usize) -> Self {
        Self { context: Tensor2::zeros(channels, frames) }
    }

    pub fn context(&self) -> &Tensor2 {
        &self.context
    }
}

/// Per-stream encoder state: one context buffer per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    layers: Vec<DccLayerState>,
}

impl EncoderState {
    pub fn new(weights: &EncoderWeights) -> Self {
        let layers = weights
            .layers
            .iter()
            .map(|l| DccLayerState::zeros(l.channels(), l.context_frames()))
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[DccLayerState] {
        &self.layers
    }
}

/// Runs one layer on one chunk, updating `state` in place.
pub fn dcc_layer_step(
    input: &Tensor2,
    state: &mut DccLayerState,
    weights: &DccLayerWeights,
    tally: &mut MacTally,
) -> Result<Tensor2> {
    let want = weights.context_frames();
    if state.context.cols() != want || state.context.rows() != weights.channels() {
        return Err(Error::invalid(format!(
            "dcc layer: state is {}x{}, expected {}x{want}",
            state.context.rows(),
            state.context.cols(),
            weights.channels()
        )));
    }
    if input.rows() != weights.channels() || input.cols() == 0 {
        return Err(Error::invalid(format!(
            "dcc layer: chunk is {}x{}, expected {} channels and at least one frame",
            input.rows(),
            input.cols(),
            weights.channels()
        )));
    }
    let padded = state.context.concat_cols(input)?;
    let out = layer_core(&padded, input, weights, tally)?;
    state.context = padded.slice_cols(padded.cols() - want, padded.cols());
    Ok(out)
}

/// `input + relu(conv(layer_norm(padded)))` with `padded` already carrying
/// exactly the causal left context of `input`.
fn layer_core(
    padded: &Tensor2,
    input: &Tensor2,
    weights: &DccLayerWeights,
    tally: &mut MacTally,
) -> Result<Tensor2> {
    let spec = weights.spec();
    let frames = input.cols();
    let taps = spec.kernel_size;
    let mut conv = if frames * taps < padded.cols() {
        // The norm is per frame, so only the frames the conv reads need it.
        // Laying the taps of each output side by side turns the dilated conv
        // into a stride-`taps` conv that reads the same values in the same order.
        let gathered = Tensor2::from_fn(padded.rows(), frames * taps, |r, c| {
            padded.get(r, c / taps + (c % taps) * spec.dilation)
        });
        let normed = layer_norm(&gathered, &weights.norm.gain, &weights.norm.bias, LAYER_NORM_EPS)?;
        let dense = ConvSpec { stride: taps, dilation: 1, ..spec };
        conv1d_tallied(&normed, &weights.conv_weight, &weights.conv_bias, &dense, 0, 0, tally)?
    } else {
        let normed = layer_norm(padded, &weights.norm.gain, &weights.norm.bias, LAYER_NORM_EPS)?;
        conv1d_tallied(&normed, &weights.conv_weight, &weights.conv_bias, &spec, 0, 0, tally)?
    };
    relu_in_place(&mut conv);
    add(input, &conv)
}

/// Encodes one chunk `y_k` into `e_k`, layer by layer.
pub fn encode_chunk(
    chunk: &Tensor2,
    state: &mut EncoderState,
    weights: &EncoderWeights,
    tally: &mut MacTally,
) -> Result<Tensor2> {
    if state.layers.len() != weights.layers.len() {
        return Err(Error::invalid(format!(
            "encoder: {} layer states for {} layers",
            state.layers.len(),
            weights.layers.len()
        )));
    }
    let mut x = chunk.clone();
    for (layer, st) in weights.layers.iter().zip(state.layers.iter_mut()) {
        x = dcc_layer_step(&x, st, layer, tally)?;
    }
    Ok(x)
}

/// Encodes a whole latent sequence in one pass, each layer seeing zero frames
/// before the start. Equivalent to streaming the sequence chunk by chunk.
pub fn encode_sequence(sequence: &Tensor2, weights: &EncoderWeights) -> Result<Tensor2> {
    let mut x = sequence.clone();
    for layer in &weights.layers {
        let zeros = Tensor2::zeros(layer.channels(), layer.context_frames());
        let padded = zeros.concat_cols(&x)?;
        x = layer_core(&padded, &x, layer, &mut MacTally::new())?;
    }
    Ok(x)
}
