//! Forward computation, loss and exact gradients of the encoder-decoder.
//!
//! Encoder: embeddings feed a stack of bidirectional LSTM layers; each layer
//! runs both directions over the previous layer's concatenated output and the
//! top layer's concatenation gives one annotation per source position.
//! Positions after `<eos>` are masked: the recurrences never see them and
//! attention ignores them.
//!
//! Decoder: a bridge maps the final forward/backward states to every layer's
//! initial `(h, c)`. At each step the previous top-layer state queries an
//! additive attention network, `e_j = v . tanh(W_q s + W_k h_j + b)`, the
//! context is the softmax-weighted sum of annotations, and the first layer
//! reads `[embedding(y_prev); context]`. The top state is projected to
//! logits over the target vocabulary.
//!
//! Dropout (inverted) sits between stacked LSTM layers and before the output
//! projection. Its masks are recorded in the trace so the backward pass
//! reuses them exactly.

use alloc::vec::Vec;

use rand::{Rng, RngCore};
use thiserror::Error;

use super::lstm::{self, CellCache};
use super::params::ModelParams;
use super::tensor::{argmax, axpy, dot, log_sum_exp, softmax};
use super::vocab::{end_id, go_id, source_id, PAD};
use crate::arith::Word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("every source position is masked")]
    AllMasked,
    #[error("no candidates to score")]
    EmptyCandidates,
    #[error("target must start with Go and contain at least one prediction")]
    BadTarget,
}

/// Inverted dropout with its own random stream.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut dyn RngCore,
}

impl Dropout<'_> {
    fn mask(&mut self, len: usize) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.rate);
        (0..len)
            .map(|_| if self.rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect()
    }
}

fn apply_mask(x: &[f64], mask: Option<&Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => x.to_vec(),
    }
}

fn draw_mask(dropout: &mut Option<&mut Dropout<'_>>, len: usize) -> Option<Vec<f64>> {
    dropout.as_deref_mut().map(|d| d.mask(len))
}

/// Number of positions the encoder reads: through `<eos>`, or up to the
/// first `PAD` when there is no `<eos>`.
pub fn effective_len(src: &[usize]) -> usize {
    let eos = source_id(Word::Eos);
    match src.iter().position(|&t| t == eos) {
        Some(i) => i + 1,
        None => src.iter().position(|&t| t == PAD).unwrap_or(src.len()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTrace {
    pub src: Vec<usize>,
    pub len: usize,
    /// `[layer][direction][position]`
    pub cells: Vec<[Vec<CellCache>; 2]>,
    /// Dropout masks on each non-top layer's output, `[layer][position]`.
    pub masks: Vec<Vec<Option<Vec<f64>>>>,
    /// Top-layer `[forward; backward]` per source position (zero when masked).
    pub annotations: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    /// `W_k h_j` per position.
    pub keys: Vec<Vec<f64>>,
    /// Last forward state and first backward state of the top layer.
    pub final_state: Vec<f64>,
}

/// Runs the bidirectional encoder over `src` (normally padded to 8).
pub fn encode(params: &ModelParams, src: &[usize], mut dropout: Option<&mut Dropout<'_>>) -> EncoderTrace {
    let dims = params.dims;
    let h = dims.hidden;
    let len = effective_len(src);
    let mut inputs: Vec<Vec<f64>> = src[..len].iter().map(|&t| params.src_embed.row(t).to_vec()).collect();
    let mut cells = Vec::with_capacity(dims.layers);
    let mut masks = Vec::with_capacity(dims.layers);
    let zeros = alloc::vec![0.0; h];

    for (l, layer) in params.encoder.iter().enumerate() {
        let mut fwd: Vec<CellCache> = Vec::with_capacity(len);
        for input in &inputs {
            let (hp, cp) = fwd.last().map_or((&zeros[..], &zeros[..]), |c| (&c.h[..], &c.c[..]));
            let cache = lstm::forward(&layer[0], input, hp, cp);
            fwd.push(cache);
        }
        let mut bwd: Vec<Option<CellCache>> = alloc::vec![None; len];
        for t in (0..len).rev() {
            let next = bwd.get(t + 1).and_then(Option::as_ref);
            let (hp, cp) = next.map_or((&zeros[..], &zeros[..]), |c| (&c.h[..], &c.c[..]));
            bwd[t] = Some(lstm::forward(&layer[1], &inputs[t], hp, cp));
        }
        let bwd: Vec<CellCache> = bwd.into_iter().map(|c| c.expect("filled")).collect();

        let outputs: Vec<Vec<f64>> = (0..len)
            .map(|t| {
                let mut o = fwd[t].h.clone();
                o.extend_from_slice(&bwd[t].h);
                o
            })
            .collect();
        if l + 1 < dims.layers {
            let layer_masks: Vec<Option<Vec<f64>>> =
                (0..len).map(|_| draw_mask(&mut dropout, 2 * h)).collect();
            inputs = outputs
                .iter()
                .zip(&layer_masks)
                .map(|(o, m)| apply_mask(o, m.as_ref()))
                .collect();
            masks.push(layer_masks);
        } else {
            inputs = outputs;
        }
        cells.push([fwd, bwd]);
    }

    let mut annotations = inputs;
    annotations.resize(src.len(), alloc::vec![0.0; 2 * h]);
    let mask: Vec<bool> = (0..src.len()).map(|t| t < len).collect();
    let keys = annotations
        .iter()
        .map(|a| {
            let mut k = alloc::vec![0.0; dims.attention];
            params.att_key.affine(&alloc::vec![0.0; dims.attention], a, &mut k);
            k
        })
        .collect();
    let mut final_state = alloc::vec![0.0; 2 * h];
    if len > 0 {
        final_state[..h].copy_from_slice(&annotations[len - 1][..h]);
        final_state[h..].copy_from_slice(&annotations[0][h..]);
    }
    EncoderTrace { src: src.to_vec(), len, cells, masks, annotations, mask, keys, final_state }
}

/// Additive attention for one decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub query: Vec<f64>,
    /// `tanh(W_q s + W_k h_j + b)` per position (empty when masked).
    pub hidden: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    /// Softmax weights over positions; masked positions get 0.
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

pub fn attend(params: &ModelParams, query: &[f64], enc: &EncoderTrace) -> Result<Attention, ModelError> {
    if !enc.mask.iter().any(|m| *m) {
        return Err(ModelError::AllMasked);
    }
    let a = params.dims.attention;
    let mut q = alloc::vec![0.0; a];
    params.att_query.affine(&params.att_bias.data, query, &mut q);
    let n = enc.annotations.len();
    let mut hidden = alloc::vec![Vec::new(); n];
    let mut scores = alloc::vec![f64::NEG_INFINITY; n];
    for j in (0..n).filter(|&j| enc.mask[j]) {
        let u: Vec<f64> = q.iter().zip(&enc.keys[j]).map(|(x, k)| libm::tanh(x + k)).collect();
        scores[j] = dot(&params.att_score.data, &u);
        hidden[j] = u;
    }
    let live: Vec<f64> = (0..n).filter(|&j| enc.mask[j]).map(|j| scores[j]).collect();
    let mut live_w = alloc::vec![0.0; live.len()];
    softmax(&live, &mut live_w);
    let mut weights = alloc::vec![0.0; n];
    let mut context = alloc::vec![0.0; params.dims.annotation()];
    for (j, w) in (0..n).filter(|&j| enc.mask[j]).zip(live_w) {
        weights[j] = w;
        axpy(w, &enc.annotations[j], &mut context);
    }
    Ok(Attention { query: query.to_vec(), hidden, scores, weights, context })
}

/// Per-layer recurrent state of the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl DecoderState {
    pub fn top(&self) -> &[f64] {
        self.h.last().expect("at least one layer")
    }
}

/// Bridge from the final encoder states to each layer's initial `(h, c)`.
pub fn initial_state(params: &ModelParams, enc: &EncoderTrace) -> (Vec<f64>, DecoderState) {
    let h = params.dims.hidden;
    let mut z = alloc::vec![0.0; params.bridge.rows];
    params.bridge.affine(&params.bridge_bias.data, &enc.final_state, &mut z);
    let state = DecoderState {
        h: z.chunks_exact(2 * h).map(|c| c[..h].to_vec()).collect(),
        c: z.chunks_exact(2 * h).map(|c| c[h..].to_vec()).collect(),
    };
    (z, state)
}

/// One decoder step, cached for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub prev_token: usize,
    pub cells: Vec<CellCache>,
    /// Dropout masks on each layer's output (the last one precedes the
    /// output projection).
    pub masks: Vec<Option<Vec<f64>>>,
    /// Input to the output projection.
    pub top: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Layer-1 input is `[embedding(y_prev); context]`; returns the step cache
/// (with logits) and the new state.
pub fn decode_step(
    params: &ModelParams,
    y_prev: usize,
    state: &DecoderState,
    context: &[f64],
    mut dropout: Option<&mut Dropout<'_>>,
) -> (StepCache, DecoderState) {
    let dims = params.dims;
    let mut x = params.tgt_embed.row(y_prev).to_vec();
    x.extend_from_slice(context);
    let mut cells = Vec::with_capacity(dims.layers);
    let mut masks = Vec::with_capacity(dims.layers);
    for (l, layer) in params.decoder.iter().enumerate() {
        let cache = lstm::forward(layer, &x, &state.h[l], &state.c[l]);
        let mask = draw_mask(&mut dropout, dims.hidden);
        x = apply_mask(&cache.h, mask.as_ref());
        masks.push(mask);
        cells.push(cache);
    }
    let mut logits = alloc::vec![0.0; dims.tgt_vocab];
    params.out.affine(&params.out_bias.data, &x, &mut logits);
    let next = DecoderState {
        h: cells.iter().map(|c| c.h.clone()).collect(),
        c: cells.iter().map(|c| c.c.clone()).collect(),
    };
    (StepCache { prev_token: y_prev, cells, masks, top: x, logits }, next)
}

/// Decoder side of a teacher-forced pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTrace {
    pub initial: Vec<f64>,
    pub attention: Vec<Attention>,
    pub steps: Vec<StepCache>,
    pub probs: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
    pub loss: f64,
}

/// Everything needed to backpropagate one teacher-forced sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub encoder: EncoderTrace,
    pub decoder: DecoderTrace,
}

impl ForwardTrace {
    pub fn loss(&self) -> f64 {
        self.decoder.loss
    }
}

/// Positions of `target` that are predicted: through the first `End`, or up
/// to the first `PAD`.
pub(crate) fn target_span(target: &[usize]) -> Result<&[usize], ModelError> {
    if target.first() != Some(&go_id()) {
        return Err(ModelError::BadTarget);
    }
    let n = match target.iter().position(|&t| t == end_id()) {
        Some(i) => i + 1,
        None => target.iter().position(|&t| t == PAD).unwrap_or(target.len()),
    };
    if n < 2 {
        return Err(ModelError::BadTarget);
    }
    Ok(&target[..n])
}

fn decode_teacher_forced(
    params: &ModelParams,
    enc: &EncoderTrace,
    target: &[usize],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<DecoderTrace, ModelError> {
    let target = target_span(target)?;
    let (initial, mut state) = initial_state(params, enc);
    let mut trace = DecoderTrace {
        initial,
        attention: Vec::with_capacity(target.len()),
        steps: Vec::with_capacity(target.len()),
        probs: Vec::with_capacity(target.len()),
        targets: target[1..].to_vec(),
        loss: 0.0,
    };
    for i in 1..target.len() {
        let att = attend(params, state.top(), enc)?;
        let (step, next) = decode_step(params, target[i - 1], &state, &att.context, dropout.as_deref_mut());
        trace.loss += log_sum_exp(&step.logits) - step.logits[target[i]];
        let mut p = alloc::vec![0.0; step.logits.len()];
        softmax(&step.logits, &mut p);
        trace.probs.push(p);
        trace.attention.push(att);
        trace.steps.push(step);
        state = next;
    }
    Ok(trace)
}

/// Teacher-forced negative log-likelihood `-sum_t log p(y_t | y_<t, x)`,
/// summed over the steps up to `End`; padding never enters the sum.
pub fn nll(
    params: &ModelParams,
    src: &[usize],
    target: &[usize],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<(f64, ForwardTrace), ModelError> {
    let encoder = encode(params, src, dropout.as_deref_mut());
    let decoder = decode_teacher_forced(params, &encoder, target, dropout)?;
    Ok((decoder.loss, ForwardTrace { encoder, decoder }))
}

/// Exact gradient of `trace.loss` with respect to every parameter.
pub fn backprop(params: &ModelParams, trace: &ForwardTrace) -> ModelParams {
    let mut grad = params.zeros_like();
    backprop_into(params, trace, &mut grad);
    grad
}

/// Accumulating variant of [`backprop`].
pub fn backprop_into(params: &ModelParams, trace: &ForwardTrace, grad: &mut ModelParams) {
    let dims = params.dims;
    let (h, layers, e) = (dims.hidden, dims.layers, dims.embed);
    let enc = &trace.encoder;
    let dec = &trace.decoder;
    let n_src = enc.annotations.len();

    let mut d_ann = alloc::vec![alloc::vec![0.0; 2 * h]; n_src];
    let mut d_keys = alloc::vec![alloc::vec![0.0; dims.attention]; n_src];
    let mut carry_h = alloc::vec![alloc::vec![0.0; h]; layers];
    let mut carry_c = alloc::vec![alloc::vec![0.0; h]; layers];

    for ((step, att), (probs, &y)) in dec
        .steps
        .iter()
        .zip(&dec.attention)
        .zip(dec.probs.iter().zip(&dec.targets))
        .rev()
    {
        let mut d_logits = probs.clone();
        d_logits[y] -= 1.0;
        grad.out.outer_add(&d_logits, &step.top);
        grad.out_bias.add_assign(&d_logits);
        let mut d_top = alloc::vec![0.0; h];
        params.out.tr_mul_add(&d_logits, &mut d_top);
        let mut d_above = apply_mask(&d_top, step.masks[layers - 1].as_ref());

        let mut d_context = Vec::new();
        for l in (0..layers).rev() {
            let dh: Vec<f64> = carry_h[l].iter().zip(&d_above).map(|(a, b)| a + b).collect();
            let g = lstm::backward(&params.decoder[l], &mut grad.decoder[l], &step.cells[l], &dh, &carry_c[l]);
            carry_h[l] = g.dh_prev;
            carry_c[l] = g.dc_prev;
            if l > 0 {
                d_above = apply_mask(&g.dx, step.masks[l - 1].as_ref());
            } else {
                grad.tgt_embed.row_mut(step.prev_token).iter_mut().zip(&g.dx[..e]).for_each(|(a, b)| *a += b);
                d_context = g.dx[e..].to_vec();
            }
        }

        // attention
        let mut d_q = alloc::vec![0.0; dims.attention];
        let d_alpha: Vec<f64> = (0..n_src)
            .map(|j| if enc.mask[j] { dot(&d_context, &enc.annotations[j]) } else { 0.0 })
            .collect();
        let mean: f64 = att.weights.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        for j in (0..n_src).filter(|&j| enc.mask[j]) {
            axpy(att.weights[j], &d_context, &mut d_ann[j]);
            let d_score = att.weights[j] * (d_alpha[j] - mean);
            let u = &att.hidden[j];
            axpy(d_score, u, &mut grad.att_score.data);
            for (k, (&uk, &vk)) in u.iter().zip(&params.att_score.data).enumerate() {
                let du = d_score * vk * (1.0 - uk * uk);
                d_q[k] += du;
                d_keys[j][k] += du;
            }
        }
        grad.att_bias.add_assign(&d_q);
        grad.att_query.outer_add(&d_q, &att.query);
        params.att_query.tr_mul_add(&d_q, &mut carry_h[layers - 1]);
    }

    // bridge
    let mut d_init = Vec::with_capacity(2 * layers * h);
    for l in 0..layers {
        d_init.extend_from_slice(&carry_h[l]);
        d_init.extend_from_slice(&carry_c[l]);
    }
    grad.bridge.outer_add(&d_init, &enc.final_state);
    grad.bridge_bias.add_assign(&d_init);
    let mut d_final = alloc::vec![0.0; 2 * h];
    params.bridge.tr_mul_add(&d_init, &mut d_final);

    for j in 0..n_src {
        grad.att_key.outer_add(&d_keys[j], &enc.annotations[j]);
        params.att_key.tr_mul_add(&d_keys[j], &mut d_ann[j]);
    }

    backprop_encoder(params, enc, d_ann, &d_final, grad);
}

fn backprop_encoder(
    params: &ModelParams,
    enc: &EncoderTrace,
    mut d_out: Vec<Vec<f64>>,
    d_final: &[f64],
    grad: &mut ModelParams,
) {
    let h = params.dims.hidden;
    let len = enc.len;
    if len == 0 {
        return;
    }
    d_out.truncate(len);
    axpy(1.0, &d_final[..h], &mut d_out[len - 1][..h]);
    axpy(1.0, &d_final[h..], &mut d_out[0][h..]);

    for l in (0..params.dims.layers).rev() {
        let [fwd, bwd] = &enc.cells[l];
        let in_size = params.encoder[l][0].input_size();
        let mut d_in = alloc::vec![alloc::vec![0.0; in_size]; len];

        let mut dh_c = alloc::vec![0.0; h];
        let mut dc_c = alloc::vec![0.0; h];
        for t in (0..len).rev() {
            let dh: Vec<f64> = d_out[t][..h].iter().zip(&dh_c).map(|(a, b)| a + b).collect();
            let g = lstm::backward(&params.encoder[l][0], &mut grad.encoder[l][0], &fwd[t], &dh, &dc_c);
            axpy(1.0, &g.dx, &mut d_in[t]);
            dh_c = g.dh_prev;
            dc_c = g.dc_prev;
        }
        let mut dh_c = alloc::vec![0.0; h];
        let mut dc_c = alloc::vec![0.0; h];
        for t in 0..len {
            let dh: Vec<f64> = d_out[t][h..].iter().zip(&dh_c).map(|(a, b)| a + b).collect();
            let g = lstm::backward(&params.encoder[l][1], &mut grad.encoder[l][1], &bwd[t], &dh, &dc_c);
            axpy(1.0, &g.dx, &mut d_in[t]);
            dh_c = g.dh_prev;
            dc_c = g.dc_prev;
        }

        if l > 0 {
            d_out = d_in
                .iter()
                .zip(&enc.masks[l - 1])
                .map(|(d, m)| apply_mask(d, m.as_ref()))
                .collect();
        } else {
            for (t, d) in d_in.iter().enumerate() {
                axpy(1.0, d, grad.src_embed.row_mut(enc.src[t]));
            }
        }
    }
}

/// Argmax decoding from `Go` until `End` or `max_len` tokens (the `Go`
/// included). Dropout is off.
pub fn greedy_decode(params: &ModelParams, src: &[usize], max_len: usize) -> Result<Vec<usize>, ModelError> {
    let enc = encode(params, src, None);
    let (_, mut state) = initial_state(params, &enc);
    let mut out = alloc::vec![go_id()];
    while out.len() < max_len {
        let att = attend(params, state.top(), &enc)?;
        let (step, next) = decode_step(params, *out.last().expect("non-empty"), &state, &att.context, None);
        let token = argmax(&step.logits);
        out.push(token);
        state = next;
        if token == end_id() {
            break;
        }
    }
    Ok(out)
}

/// Teacher-forced loss of every candidate for one source, dropout off. The
/// encoder runs once.
pub fn candidate_losses(
    params: &ModelParams,
    src: &[usize],
    candidates: &[Vec<usize>],
) -> Result<Vec<f64>, ModelError> {
    let enc = encode(params, src, None);
    candidates
        .iter()
        .map(|c| decode_teacher_forced(params, &enc, c, None).map(|t| t.loss))
        .collect()
}

/// Index of the candidate with the least loss (the most probable one under
/// the model); ties go to the earliest candidate. Scores every candidate in
/// full; [`super::search::score_candidates`] gives the same answer faster.
pub fn score_candidates_exhaustive(params: &ModelParams, src: &[usize], candidates: &[Vec<usize>]) -> Result<usize, ModelError> {
    if candidates.is_empty() {
        return Err(ModelError::EmptyCandidates);
    }
    let losses = candidate_losses(params, src, candidates)?;
    let mut best = 0;
    for (i, l) in losses.iter().enumerate() {
        if *l < losses[best] {
            best = i;
        }
    }
    Ok(best)
}
