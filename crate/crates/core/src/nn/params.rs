use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::tensor::Mat;
use super::vocab::{SOURCE_VOCAB, TARGET_VOCAB};

/// Model sizes. [`Dims::default`] is the full model: 3 layers of 20 units,
/// 20-dimensional embeddings and a 20-unit attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub attention: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            src_vocab: SOURCE_VOCAB,
            tgt_vocab: TARGET_VOCAB,
            embed: 20,
            hidden: 20,
            layers: 3,
            attention: 20,
        }
    }
}

impl Dims {
    /// Same vocabularies and depth, every width set to `width`.
    pub fn with_width(width: usize) -> Self {
        Dims { embed: width, hidden: width, attention: width, ..Dims::default() }
    }

    /// Width of an encoder annotation: forward and backward states.
    pub fn annotation(&self) -> usize {
        2 * self.hidden
    }
}

/// One LSTM layer: gates `i, f, o, g` stacked row-wise over `[x; h_prev]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: Mat,
    pub b: Mat,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams { w: Mat::zeros(4 * hidden, input + hidden), b: Mat::column(4 * hidden) }
    }

    pub fn input_size(&self) -> usize {
        self.w.cols - self.hidden()
    }

    pub fn hidden(&self) -> usize {
        self.b.rows / 4
    }
}

/// Every learnable weight of the encoder-decoder.
///
/// Gradients and optimizer caches use the same layout, so the tensor list
/// returned by [`ModelParams::tensors`] is the single declared order used by
/// the optimizer and by checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    pub src_embed: Mat,
    pub tgt_embed: Mat,
    /// Per layer, forward then backward direction.
    pub encoder: Vec<[LstmParams; 2]>,
    pub decoder: Vec<LstmParams>,
    pub att_query: Mat,
    pub att_key: Mat,
    pub att_bias: Mat,
    /// Row vector scoring the attention hidden layer.
    pub att_score: Mat,
    /// Final encoder states to every decoder layer's initial `(h, c)`.
    pub bridge: Mat,
    pub bridge_bias: Mat,
    pub out: Mat,
    pub out_bias: Mat,
}

impl ModelParams {
    pub fn zeros(dims: Dims) -> Self {
        let h = dims.hidden;
        let encoder = (0..dims.layers)
            .map(|l| {
                let input = if l == 0 { dims.embed } else { dims.annotation() };
                [LstmParams::zeros(input, h), LstmParams::zeros(input, h)]
            })
            .collect();
        let decoder = (0..dims.layers)
            .map(|l| {
                let input = if l == 0 { dims.embed + dims.annotation() } else { h };
                LstmParams::zeros(input, h)
            })
            .collect();
        ModelParams {
            dims,
            src_embed: Mat::zeros(dims.src_vocab, dims.embed),
            tgt_embed: Mat::zeros(dims.tgt_vocab, dims.embed),
            encoder,
            decoder,
            att_query: Mat::zeros(dims.attention, h),
            att_key: Mat::zeros(dims.attention, dims.annotation()),
            att_bias: Mat::column(dims.attention),
            att_score: Mat::zeros(1, dims.attention),
            bridge: Mat::zeros(2 * dims.layers * h, dims.annotation()),
            bridge_bias: Mat::column(2 * dims.layers * h),
            out: Mat::zeros(dims.tgt_vocab, h),
            out_bias: Mat::column(dims.tgt_vocab),
        }
    }

    /// Every weight i.i.d. uniform on `[-bound, bound]`, drawn tensor by
    /// tensor in declared order.
    pub fn init_uniform<R: Rng + ?Sized>(dims: Dims, bound: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        for t in p.tensors_mut() {
            t.fill_uniform(rng, bound);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    pub fn tensors(&self) -> Vec<&Mat> {
        let mut out = alloc::vec![&self.src_embed, &self.tgt_embed];
        for layer in &self.encoder {
            for dir in layer {
                out.push(&dir.w);
                out.push(&dir.b);
            }
        }
        for layer in &self.decoder {
            out.push(&layer.w);
            out.push(&layer.b);
        }
        out.extend([
            &self.att_query,
            &self.att_key,
            &self.att_bias,
            &self.att_score,
            &self.bridge,
            &self.bridge_bias,
            &self.out,
            &self.out_bias,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = alloc::vec![&mut self.src_embed, &mut self.tgt_embed];
        for layer in &mut self.encoder {
            for dir in layer {
                out.push(&mut dir.w);
                out.push(&mut dir.b);
            }
        }
        for layer in &mut self.decoder {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        out.extend([
            &mut self.att_query,
            &mut self.att_key,
            &mut self.att_bias,
            &mut self.att_score,
            &mut self.bridge,
            &mut self.bridge_bias,
            &mut self.out,
            &mut self.out_bias,
        ]);
        out
    }

    /// Names matching [`ModelParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = alloc::vec![String::from("src_embed"), String::from("tgt_embed")];
        for l in 0..self.encoder.len() {
            for dir in ["fwd", "bwd"] {
                out.push(format!("encoder.{l}.{dir}.w"));
                out.push(format!("encoder.{l}.{dir}.b"));
            }
        }
        for l in 0..self.decoder.len() {
            out.push(format!("decoder.{l}.w"));
            out.push(format!("decoder.{l}.b"));
        }
        for name in ["att_query", "att_key", "att_bias", "att_score", "bridge", "bridge_bias", "out", "out_bias"] {
            out.push(String::from(name));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}
