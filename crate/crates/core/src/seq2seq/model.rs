//! Batched forward pass, masked cross-entropy and backpropagation through time.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;

use super::attention::attend_keys;
use super::gru::GruCache;
use super::params::{Gradients, ModelParams};
use super::Hyperparams;
use crate::corpus::{TokenizedPair, PAD};
use crate::error::{Error, Result};

/// Encoder activations for a batch of equal-length inputs.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `(batch * len) x hidden`; row `b * len + t` is example `b` at step `t`.
    pub states: Array2<f64>,
    /// `states . attn^T`, the per-position attention keys.
    pub keys: Array2<f64>,
    /// `batch x hidden`
    pub final_state: Array2<f64>,
    pub batch: usize,
    pub len: usize,
    src: Vec<Vec<usize>>,
    steps: Vec<GruCache>,
}

impl Encoded {
    fn rows(&self, b: usize) -> std::ops::Range<usize> {
        b * self.len..(b + 1) * self.len
    }
}

fn check_ids(ids: &[usize], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&id| id >= vocab) {
        Some(&id) => Err(Error::TokenRange { id, size: vocab }),
        None => Ok(()),
    }
}

pub(crate) fn encode_batch(params: &ModelParams, src: &[&[usize]]) -> Result<Encoded> {
    let batch = src.len();
    if batch == 0 {
        return Err(Error::Empty("encoder batch"));
    }
    let len = src[0].len();
    if len == 0 {
        return Err(Error::Empty("encoder input"));
    }
    if src.iter().any(|s| s.len() != len) {
        return Err(Error::Shape("encoder batch mixes input lengths".into()));
    }
    for s in src {
        check_ids(s, params.vocab_size())?;
    }
    let hidden = params.hidden_size();
    let mut h = Array2::zeros((batch, hidden));
    let mut states = Array2::zeros((batch * len, hidden));
    let mut steps = Vec::with_capacity(len);
    for t in 0..len {
        let ids: Vec<usize> = src.iter().map(|s| s[t]).collect();
        let x = params.src_embed.select(Axis(0), &ids);
        let cache = params.encoder.forward(x, h);
        for b in 0..batch {
            states.row_mut(b * len + t).assign(&cache.h.row(b));
        }
        h = cache.h.clone();
        steps.push(cache);
    }
    let keys = states.dot(&params.attn.t());
    Ok(Encoded {
        states,
        keys,
        final_state: h,
        batch,
        len,
        src: src.iter().map(|s| s.to_vec()).collect(),
        steps,
    })
}

/// Runs the encoder over one input; returns every hidden state (one row per
/// input position) and the final state.
pub fn encode(input_ids: &[usize], params: &ModelParams) -> Result<(Array2<f64>, Array1<f64>)> {
    let enc = encode_batch(params, &[input_ids])?;
    let last = enc.final_state.row(0).to_owned();
    Ok((enc.states, last))
}

#[derive(Debug, Clone)]
pub(crate) struct StepOutput {
    pub gru: GruCache,
    pub weights: Array2<f64>,
    pub features: Array2<f64>,
    pub logits: Array2<f64>,
}

/// One decoder step for every example in the batch.
pub(crate) fn decoder_step(params: &ModelParams, enc: &Encoded, ids: &[usize], s_prev: Array2<f64>) -> StepOutput {
    let x = params.tgt_embed.select(Axis(0), ids);
    let gru = params.decoder.forward(x, s_prev);
    let hidden = params.hidden_size();
    let mut weights = Array2::zeros((enc.batch, enc.len));
    let mut context = Array2::zeros((enc.batch, hidden));
    for b in 0..enc.batch {
        let rows = enc.rows(b);
        let (ctx, w) = attend_keys(
            gru.h.row(b),
            enc.keys.slice(s![rows.clone(), ..]),
            enc.states.slice(s![rows, ..]),
        );
        weights.row_mut(b).assign(&w);
        context.row_mut(b).assign(&ctx);
    }
    let features = concatenate![Axis(1), gru.h, context];
    let logits = features.dot(&params.out_w) + &params.out_b;
    StepOutput { gru, weights, features, logits }
}

/// Row-wise log-sum-exp.
pub(crate) fn log_sum_exp(row: ndarray::ArrayView1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
struct DecoderStep {
    ids: Vec<usize>,
    out: StepOutput,
    probs: Array2<f64>,
    gold: Vec<usize>,
    mask: Vec<bool>,
}

/// Cached activations of one forward pass, sufficient for exact gradients.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    enc: Encoded,
    steps: Vec<DecoderStep>,
    /// Number of unmasked target positions.
    pub tokens: usize,
    /// Sum of token cross-entropies (the loss is `total / tokens`).
    pub total: f64,
}

impl ForwardTrace {
    pub fn loss(&self) -> f64 {
        self.total / self.tokens as f64
    }

    pub fn encoder_steps(&self) -> usize {
        self.enc.len
    }

    pub fn decoder_steps(&self) -> usize {
        self.steps.len()
    }

    /// Attention weights of every decoder step, `batch x input_len` each.
    pub fn attention(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.steps.iter().map(|s| &s.out.weights)
    }
}

/// Mean token cross-entropy over the non-PAD target positions of a batch.
///
/// The decoder sees `SOS` first; later inputs are the gold token with
/// probability `teacher_forcing_ratio` (drawn per example and step), else the
/// model's previous argmax.
pub fn forward_loss<R: Rng + ?Sized>(
    params: &ModelParams,
    batch: &[&TokenizedPair],
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<(f64, ForwardTrace)> {
    let vocab = params.vocab_size();
    for p in batch {
        check_ids(&p.target_ids, vocab)?;
        if p.target_ids.len() < 2 {
            return Err(Error::Shape("target needs at least SOS and EOS".into()));
        }
    }
    let src: Vec<&[usize]> = batch.iter().map(|p| p.input_ids.as_slice()).collect();
    let enc = encode_batch(params, &src)?;
    let n_steps = batch.iter().map(|p| p.target_ids.len() - 1).max().unwrap_or(0);
    let ratio = hyper.teacher_forcing_ratio;

    let mut s = enc.final_state.clone();
    let mut prev_pred = vec![PAD; batch.len()];
    let mut steps = Vec::with_capacity(n_steps);
    let mut total = 0.0;
    let mut tokens = 0;
    for t in 0..n_steps {
        let mut ids = Vec::with_capacity(batch.len());
        let mut gold = Vec::with_capacity(batch.len());
        let mut mask = Vec::with_capacity(batch.len());
        for (b, p) in batch.iter().enumerate() {
            let tgt = &p.target_ids;
            let live = t + 1 < tgt.len();
            let input = if !live {
                PAD
            } else if t == 0 || ratio >= 1.0 {
                tgt[t]
            } else if ratio > 0.0 && rng.random::<f64>() < ratio {
                tgt[t]
            } else {
                prev_pred[b]
            };
            let g = if live { tgt[t + 1] } else { PAD };
            ids.push(input);
            gold.push(g);
            mask.push(live && g != PAD);
        }
        let out = decoder_step(params, &enc, &ids, s);
        let mut probs = out.logits.clone();
        for (b, mut row) in probs.axis_iter_mut(Axis(0)).enumerate() {
            let lse = log_sum_exp(row.view());
            prev_pred[b] = argmax(row.view());
            if mask[b] {
                total += lse - row[gold[b]];
                tokens += 1;
            }
            row.mapv_inplace(|v| (v - lse).exp());
        }
        s = out.gru.h.clone();
        steps.push(DecoderStep { ids, out, probs, gold, mask });
    }
    if tokens == 0 {
        return Err(Error::Empty("no target tokens in batch"));
    }
    let trace = ForwardTrace { enc, steps, tokens, total };
    Ok((trace.loss(), trace))
}

/// Exact gradient of `trace.loss()` with respect to every parameter.
pub fn backward(trace: &ForwardTrace, params: &ModelParams) -> Gradients {
    let mut g = params.zeros_like();
    let enc = &trace.enc;
    let hidden = params.hidden_size();
    let scale = 1.0 / trace.tokens as f64;

    let mut d_states = Array2::<f64>::zeros(enc.states.dim());
    let mut d_keys = Array2::<f64>::zeros(enc.keys.dim());
    let mut ds_next = Array2::<f64>::zeros((enc.batch, hidden));

    for step in trace.steps.iter().rev() {
        let mut dlogits = step.probs.clone();
        for (b, mut row) in dlogits.axis_iter_mut(Axis(0)).enumerate() {
            if step.mask[b] {
                row[step.gold[b]] -= 1.0;
                row *= scale;
            } else {
                row.fill(0.0);
            }
        }
        g.out_w += &step.out.features.t().dot(&dlogits);
        g.out_b += &dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_features = dlogits.dot(&params.out_w.t());
        let mut ds = &d_features.slice(s![.., ..hidden]) + &ds_next;
        let d_context = d_features.slice(s![.., hidden..]);

        for b in 0..enc.batch {
            let rows = enc.rows(b);
            let states = enc.states.slice(s![rows.clone(), ..]);
            let keys = enc.keys.slice(s![rows.clone(), ..]);
            let w = step.out.weights.row(b);
            let dc = d_context.row(b);
            // context = w . states
            let dw = states.dot(&dc);
            for (i, mut r) in d_states.slice_mut(s![rows.clone(), ..]).axis_iter_mut(Axis(0)).enumerate() {
                r.scaled_add(w[i], &dc);
            }
            // w = softmax(scores)
            let inner = w.dot(&dw);
            let dscores = &w * &(dw - inner);
            // scores = keys . s
            ds.row_mut(b).scaled_add(1.0, &dscores.dot(&keys));
            let s_b = step.out.gru.h.row(b);
            for (i, mut r) in d_keys.slice_mut(s![rows, ..]).axis_iter_mut(Axis(0)).enumerate() {
                r.scaled_add(dscores[i], &s_b);
            }
        }

        let (dx, ds_prev) = params.decoder.backward(&step.out.gru, &ds, &mut g.decoder);
        for (b, &id) in step.ids.iter().enumerate() {
            g.tgt_embed.row_mut(id).scaled_add(1.0, &dx.row(b));
        }
        ds_next = ds_prev;
    }

    // keys = states . attn^T
    g.attn += &d_keys.t().dot(&enc.states);
    d_states += &d_keys.dot(&params.attn);

    let mut dh = ds_next;
    for t in (0..enc.len).rev() {
        for b in 0..enc.batch {
            dh.row_mut(b).scaled_add(1.0, &d_states.row(b * enc.len + t));
        }
        let (dx, dh_prev) = params.encoder.backward(&enc.steps[t], &dh, &mut g.encoder);
        for b in 0..enc.batch {
            g.src_embed.row_mut(enc.src[b][t]).scaled_add(1.0, &dx.row(b));
        }
        dh = dh_prev;
    }
    g
}
