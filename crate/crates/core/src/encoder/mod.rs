//! Post-layer-norm Transformer encoder with learned absolute positions.
//!
//! Every layer applies multi-head scaled dot-product self-attention over all
//! non-padding positions, then a GELU feed-forward block; each sub-block has a
//! residual connection followed by layer normalization. Gradients are computed by a
//! hand-written reverse pass over the cached forward activations.

mod forward;
mod params;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub use forward::{backward, forward, ForwardCache};
pub use params::{EncoderParams, LayerParams, Parameters, TensorRef};
pub(crate) use params::{tmut, tref, trunc_normal};

use crate::serializer::EncodedSequence;
use crate::tokenizer::{TokenId, MASK};
use crate::util::{rng, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.d_model < self.num_heads || !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.d_ff == 0 || self.max_seq_len == 0 || self.vocab_size == 0 {
            return Err(Error::Config(
                "d_ff, max_seq_len, and vocab_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }
}

/// Per-token output vectors, one row per input position.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEmbeddings(pub Array2<f64>);

impl ContextEmbeddings {
    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Attention probabilities indexed `[layer][head]` as query-by-key matrices.
pub type AttentionTensor = Vec<Vec<Array2<f64>>>;

fn check_ids(params: &EncoderParams, ids: &[TokenId]) -> Result<()> {
    let c = &params.config;
    if ids.is_empty() {
        return Err(Error::EmptyInput("empty token sequence".into()));
    }
    if ids.len() > c.max_seq_len {
        return Err(Error::Shape(format!(
            "sequence of {} tokens exceeds max_seq_len {}",
            ids.len(),
            c.max_seq_len
        )));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= c.vocab_size) {
        return Err(Error::Shape(format!(
            "token id {bad} outside vocabulary of {}",
            c.vocab_size
        )));
    }
    Ok(())
}

/// Contextual embeddings of `seq`. In train mode dropout is drawn from a stream
/// seeded by the encoder config.
pub fn encoder_forward(params: &EncoderParams, seq: &EncodedSequence, train_mode: bool) -> Result<ContextEmbeddings> {
    let mut r = rng(params.config.seed);
    let dropout = if train_mode { Some(&mut r) } else { None };
    forward(params, &seq.ids, dropout).map(|(out, _)| out)
}

/// Attention weights of every layer and head, computed without dropout.
pub fn attention_maps(params: &EncoderParams, seq: &EncodedSequence) -> Result<AttentionTensor> {
    let (_, cache) = forward(params, &seq.ids, None)?;
    Ok(cache.attention())
}

/// Masked-token logits at `positions`, each of which must hold `[MASK]`.
pub fn mlm_logits(params: &EncoderParams, seq: &EncodedSequence, positions: &[usize]) -> Result<Array2<f64>> {
    for &p in positions {
        match seq.ids.get(p) {
            Some(&MASK) => {}
            Some(_) => {
                return Err(Error::Config(format!("position {p} is not masked")));
            }
            None => {
                return Err(Error::OutOfRange {
                    index: p,
                    len: seq.len(),
                })
            }
        }
    }
    let (out, _) = forward(params, &seq.ids, None)?;
    Ok(project_mlm(params, &out, positions))
}

pub(crate) fn project_mlm(params: &EncoderParams, out: &ContextEmbeddings, positions: &[usize]) -> Array2<f64> {
    let rows = out.0.select(ndarray::Axis(0), positions);
    rows.dot(&params.mlm_weight) + &params.mlm_bias
}

/// Runs the encoder, lets `loss` turn the outputs into a scalar and its gradient
/// with respect to those outputs, and back-propagates into every parameter.
///
/// Pass `dropout` to run in train mode. The returned gradient has the same
/// structure as `params`.
pub fn loss_gradients<F>(
    params: &EncoderParams,
    ids: &[TokenId],
    dropout: Option<&mut Rng>,
    loss: F,
) -> Result<(f64, EncoderParams)>
where
    F: FnOnce(&ContextEmbeddings) -> Result<(f64, Array2<f64>)>,
{
    let (out, cache) = forward(params, ids, dropout)?;
    let (value, d_out) = loss(&out)?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "loss".into(),
        });
    }
    if d_out.dim() != out.0.dim() {
        return Err(Error::Shape(format!(
            "output gradient {:?} does not match embeddings {:?}",
            d_out.dim(),
            out.0.dim()
        )));
    }
    let mut grads = params.zeros_like();
    backward(params, &cache, d_out, &mut grads);
    Ok((value, grads))
}
