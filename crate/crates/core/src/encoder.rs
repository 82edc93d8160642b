//! Sequence-to-state encoder: item + learned position embeddings followed by one
//! causal single-head self-attention block with a residual connection.
//!
//! Positions are counted from the oldest item kept in the window, so a prefix
//! keeps its positions when items are appended. Leading padding ids are masked
//! out entirely and do not consume positions.

use serde::{Deserialize, Serialize};

use crate::data::ItemId;
use crate::error::{Error, Result};
use crate::nn::{add_outer, axpy, dot, matvec, matvec_t, ParamSet, Tensor, TensorMap};
use crate::rng::Rng;

pub const ITEM_EMB: &str = "encoder.item_emb";
pub const POS_EMB: &str = "encoder.pos_emb";
pub const W_Q: &str = "encoder.w_q";
pub const W_K: &str = "encoder.w_k";
pub const W_V: &str = "encoder.w_v";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub max_seq_len: usize,
    pub num_items: usize,
}

impl EncoderConfig {
    pub fn new(embed_dim: usize, max_seq_len: usize, num_items: usize) -> Result<Self> {
        let cfg = EncoderConfig {
            embed_dim,
            max_seq_len,
            num_items,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::invalid("embed_dim must be >= 2"));
        }
        if self.max_seq_len < 1 {
            return Err(Error::invalid("max_seq_len must be >= 1"));
        }
        if self.num_items < 2 {
            return Err(Error::invalid("num_items must be >= 2"));
        }
        Ok(())
    }

    /// Reserved id for left padding; never a valid item.
    pub fn padding_id(&self) -> ItemId {
        self.num_items
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Register encoder tensors: embeddings ~ U(-0.1, 0.1), projections identity + U(-0.01, 0.01).
pub fn init_encoder_params(
    params: &mut ParamSet,
    config: &EncoderConfig,
    rng: &mut Rng,
) -> Result<()> {
    config.validate()?;
    let d = config.embed_dim;
    params.insert(
        ITEM_EMB,
        Tensor::uniform(&[config.num_items, d], -0.1, 0.1, rng),
    )?;
    params.insert(
        POS_EMB,
        Tensor::uniform(&[config.max_seq_len, d], -0.1, 0.1, rng),
    )?;
    params.insert(W_Q, Tensor::identity_plus_noise(d, 0.01, rng))?;
    params.insert(W_K, Tensor::identity_plus_noise(d, 0.01, rng))?;
    params.insert(W_V, Tensor::identity_plus_noise(d, 0.01, rng))?;
    Ok(())
}

/// Strip leading padding, check ids, keep the most recent `max_seq_len` items.
pub(crate) fn window<'a>(sequence: &'a [ItemId], config: &EncoderConfig) -> Result<&'a [ItemId]> {
    let pad = config.padding_id();
    let start = sequence
        .iter()
        .position(|&i| i != pad)
        .unwrap_or(sequence.len());
    let real = &sequence[start..];
    if real.is_empty() {
        return Err(Error::invalid("cannot encode an empty sequence"));
    }
    if let Some(&bad) = real.iter().find(|&&i| i >= config.num_items) {
        let what = if bad == pad {
            "padding is only allowed on the left".to_owned()
        } else {
            format!(
                "item id {bad} out of range (num_items = {})",
                config.num_items
            )
        };
        return Err(Error::invalid(what));
    }
    let keep = real.len().min(config.max_seq_len);
    Ok(&real[real.len() - keep..])
}

/// Forward intermediates for the last position, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct EncoderTrace {
    items: Vec<ItemId>,
    x: Vec<Vec<f64>>,
    q_last: Vec<f64>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    attn: Vec<f64>,
    pub(crate) output: Vec<f64>,
}

fn inputs(items: &[ItemId], values: &TensorMap) -> Vec<Vec<f64>> {
    let emb = values.get(ITEM_EMB);
    let pos = values.get(POS_EMB);
    items
        .iter()
        .enumerate()
        .map(|(j, &item)| {
            emb.row(item)
                .iter()
                .zip(pos.row(j))
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect()
}

/// Softmax-weighted sum of `v[..=t]` using query `q` against `k[..=t]`, plus attention weights.
fn attend(q: &[f64], k: &[Vec<f64>], v: &[Vec<f64>], t: usize) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (q.len() as f64).sqrt();
    let scores: Vec<f64> = k[..=t].iter().map(|kj| dot(q, kj) * scale).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut attn: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = attn.iter().sum();
    attn.iter_mut().for_each(|a| *a /= sum);
    let mut h = vec![0.0; q.len()];
    for (a, vj) in attn.iter().zip(v) {
        axpy(*a, vj, &mut h);
    }
    (h, attn)
}

pub(crate) fn forward_traced(
    sequence: &[ItemId],
    values: &TensorMap,
    config: &EncoderConfig,
) -> Result<EncoderTrace> {
    let items = window(sequence, config)?.to_vec();
    let x = inputs(&items, values);
    let t = items.len() - 1;
    let w_q = values.get(W_Q);
    let w_k = values.get(W_K);
    let w_v = values.get(W_V);
    let q_last = matvec(w_q, &x[t]);
    let k: Vec<Vec<f64>> = x.iter().map(|xj| matvec(w_k, xj)).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|xj| matvec(w_v, xj)).collect();
    let (h, attn) = attend(&q_last, &k, &v, t);
    let output: Vec<f64> = x[t].iter().zip(&h).map(|(a, b)| a + b).collect();
    if output.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder output".into()));
    }
    Ok(EncoderTrace {
        items,
        x,
        q_last,
        k,
        v,
        attn,
        output,
    })
}

/// Accumulate d(loss)/d(params) given d(loss)/d(state).
pub(crate) fn backward(
    trace: &EncoderTrace,
    grad_out: &[f64],
    values: &TensorMap,
    grads: &mut TensorMap,
) {
    let len = trace.items.len();
    let t = len - 1;
    let d = grad_out.len();
    let scale = 1.0 / (d as f64).sqrt();
    let w_q = values.get(W_Q);
    let w_k = values.get(W_K);
    let w_v = values.get(W_V);

    let mut dx: Vec<Vec<f64>> = vec![vec![0.0; d]; len];
    // residual
    axpy(1.0, grad_out, &mut dx[t]);

    let da: Vec<f64> = trace.v.iter().map(|vj| dot(grad_out, vj)).collect();
    let mean_da: f64 = trace.attn.iter().zip(&da).map(|(a, g)| a * g).sum();
    let mut dq = vec![0.0; d];
    for j in 0..len {
        let a = trace.attn[j];
        let dv: Vec<f64> = grad_out.iter().map(|g| a * g).collect();
        add_outer(grads.get_mut(W_V), &dv, &trace.x[j]);
        axpy(1.0, &matvec_t(w_v, &dv), &mut dx[j]);

        let ds = a * (da[j] - mean_da) * scale;
        axpy(ds, &trace.k[j], &mut dq);
        let dk: Vec<f64> = trace.q_last.iter().map(|q| ds * q).collect();
        add_outer(grads.get_mut(W_K), &dk, &trace.x[j]);
        axpy(1.0, &matvec_t(w_k, &dk), &mut dx[j]);
    }
    add_outer(grads.get_mut(W_Q), &dq, &trace.x[t]);
    axpy(1.0, &matvec_t(w_q, &dq), &mut dx[t]);

    for (j, (&item, dxj)) in trace.items.iter().zip(&dx).enumerate() {
        axpy(1.0, dxj, grads.get_mut(ITEM_EMB).row_mut(item));
        axpy(1.0, dxj, grads.get_mut(POS_EMB).row_mut(j));
    }
}

/// State for the most recent position of `sequence`.
pub fn encode(
    sequence: &[ItemId],
    params: &ParamSet,
    config: &EncoderConfig,
) -> Result<StateVector> {
    Ok(StateVector(
        forward_traced(sequence, params.values(), config)?.output,
    ))
}

pub fn encode_batch<S: AsRef<[ItemId]>>(
    sequences: &[S],
    params: &ParamSet,
    config: &EncoderConfig,
) -> Result<Vec<StateVector>> {
    sequences
        .iter()
        .map(|s| encode(s.as_ref(), params, config))
        .collect()
}

/// Block output at every position of the (windowed) sequence.
pub fn encode_all_positions(
    sequence: &[ItemId],
    params: &ParamSet,
    config: &EncoderConfig,
) -> Result<Vec<StateVector>> {
    let values = params.values();
    let items = window(sequence, config)?;
    let x = inputs(items, values);
    let q: Vec<Vec<f64>> = x.iter().map(|xj| matvec(values.get(W_Q), xj)).collect();
    let k: Vec<Vec<f64>> = x.iter().map(|xj| matvec(values.get(W_K), xj)).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|xj| matvec(values.get(W_V), xj)).collect();
    Ok((0..items.len())
        .map(|t| {
            let (h, _) = attend(&q[t], &k, &v, t);
            StateVector(x[t].iter().zip(&h).map(|(a, b)| a + b).collect())
        })
        .collect())
}
