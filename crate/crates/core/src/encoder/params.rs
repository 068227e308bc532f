use ndarray::{Array, Array1, Array2, Dimension};
use rand_distr::{Distribution, Normal};

use super::EncoderConfig;
use crate::util::{rng, Rng};
use crate::{Error, Result};

const INIT_STD: f64 = 0.02;

/// Borrowed view of one named parameter tensor, row-major.
#[derive(Debug)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// A set of named, contiguous parameter tensors with a fixed enumeration order.
///
/// Gradients use the same type as the parameters they belong to, so optimizers and
/// checks can walk both lists in lockstep.
pub trait Parameters {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Copies values from `(name, data)` pairs; every tensor must be present with a
    /// matching length.
    fn load_tensors(&mut self, source: &std::collections::HashMap<String, Vec<f64>>) -> Result<()> {
        for (name, dst) in self.tensors_mut() {
            let src = source
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if src.len() != dst.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has {} values, expected {}",
                    src.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}

pub(crate) fn tref<'a, D: Dimension>(name: impl Into<String>, a: &'a Array<f64, D>) -> TensorRef<'a> {
    TensorRef {
        name: name.into(),
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("parameter tensors are contiguous"),
    }
}

pub(crate) fn tmut<D: Dimension>(
    name: impl Into<String>,
    a: &mut Array<f64, D>,
) -> (String, &mut [f64]) {
    (
        name.into(),
        a.as_slice_mut().expect("parameter tensors are contiguous"),
    )
}

/// Truncated normal at two standard deviations.
pub(crate) fn trunc_normal(rng: &mut Rng, shape: (usize, usize)) -> Array2<f64> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    Array2::from_shape_simple_fn(shape, || loop {
        let x: f64 = normal.sample(rng);
        if x.abs() <= 2.0 * INIT_STD {
            break x;
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
}

impl LayerParams {
    fn init(d: usize, d_ff: usize, rng: &mut Rng) -> Self {
        LayerParams {
            wq: trunc_normal(rng, (d, d)),
            bq: Array1::zeros(d),
            wk: trunc_normal(rng, (d, d)),
            bk: Array1::zeros(d),
            wv: trunc_normal(rng, (d, d)),
            bv: Array1::zeros(d),
            wo: trunc_normal(rng, (d, d)),
            bo: Array1::zeros(d),
            ln1_gamma: Array1::ones(d),
            ln1_beta: Array1::zeros(d),
            w1: trunc_normal(rng, (d, d_ff)),
            b1: Array1::zeros(d_ff),
            w2: trunc_normal(rng, (d_ff, d)),
            b2: Array1::zeros(d),
            ln2_gamma: Array1::ones(d),
            ln2_beta: Array1::zeros(d),
        }
    }

    fn zeros(d: usize, d_ff: usize) -> Self {
        LayerParams {
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln1_gamma: Array1::zeros(d),
            ln1_beta: Array1::zeros(d),
            w1: Array2::zeros((d, d_ff)),
            b1: Array1::zeros(d_ff),
            w2: Array2::zeros((d_ff, d)),
            b2: Array1::zeros(d),
            ln2_gamma: Array1::zeros(d),
            ln2_beta: Array1::zeros(d),
        }
    }

    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        let n = |s: &str| format!("{prefix}{s}");
        out.extend([
            tref(n("wq"), &self.wq),
            tref(n("bq"), &self.bq),
            tref(n("wk"), &self.wk),
            tref(n("bk"), &self.bk),
            tref(n("wv"), &self.wv),
            tref(n("bv"), &self.bv),
            tref(n("wo"), &self.wo),
            tref(n("bo"), &self.bo),
            tref(n("ln1_gamma"), &self.ln1_gamma),
            tref(n("ln1_beta"), &self.ln1_beta),
            tref(n("w1"), &self.w1),
            tref(n("b1"), &self.b1),
            tref(n("w2"), &self.w2),
            tref(n("b2"), &self.b2),
            tref(n("ln2_gamma"), &self.ln2_gamma),
            tref(n("ln2_beta"), &self.ln2_beta),
        ]);
    }

    fn push_tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        let n = |s: &str| format!("{prefix}{s}");
        out.extend([
            tmut(n("wq"), &mut self.wq),
            tmut(n("bq"), &mut self.bq),
            tmut(n("wk"), &mut self.wk),
            tmut(n("bk"), &mut self.bk),
            tmut(n("wv"), &mut self.wv),
            tmut(n("bv"), &mut self.bv),
            tmut(n("wo"), &mut self.wo),
            tmut(n("bo"), &mut self.bo),
            tmut(n("ln1_gamma"), &mut self.ln1_gamma),
            tmut(n("ln1_beta"), &mut self.ln1_beta),
            tmut(n("w1"), &mut self.w1),
            tmut(n("b1"), &mut self.b1),
            tmut(n("w2"), &mut self.w2),
            tmut(n("b2"), &mut self.b2),
            tmut(n("ln2_gamma"), &mut self.ln2_gamma),
            tmut(n("ln2_beta"), &mut self.ln2_beta),
        ]);
    }
}

/// All learnable encoder weights, including the masked-token output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub token_embeddings: Array2<f64>,
    pub position_embeddings: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub mlm_weight: Array2<f64>,
    pub mlm_bias: Array1<f64>,
}

impl EncoderParams {
    /// Seeded initialization: truncated normal (std 0.02) weights, zero biases,
    /// unit layer-norm scales.
    pub fn init(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng(config.seed);
        let d = config.d_model;
        let token_embeddings = trunc_normal(&mut rng, (config.vocab_size, d));
        let position_embeddings = trunc_normal(&mut rng, (config.max_seq_len, d));
        let layers = (0..config.num_layers)
            .map(|_| LayerParams::init(d, config.d_ff, &mut rng))
            .collect();
        let mlm_weight = trunc_normal(&mut rng, (d, config.vocab_size));
        Ok(EncoderParams {
            config: config.clone(),
            token_embeddings,
            position_embeddings,
            layers,
            mlm_weight,
            mlm_bias: Array1::zeros(config.vocab_size),
        })
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let c = &self.config;
        EncoderParams {
            config: c.clone(),
            token_embeddings: Array2::zeros(self.token_embeddings.raw_dim()),
            position_embeddings: Array2::zeros(self.position_embeddings.raw_dim()),
            layers: (0..c.num_layers)
                .map(|_| LayerParams::zeros(c.d_model, c.d_ff))
                .collect(),
            mlm_weight: Array2::zeros(self.mlm_weight.raw_dim()),
            mlm_bias: Array1::zeros(self.mlm_bias.len()),
        }
    }
}

impl Parameters for EncoderParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![
            tref("token_embeddings", &self.token_embeddings),
            tref("position_embeddings", &self.position_embeddings),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            layer.push_tensors(&format!("layers.{i}."), &mut out);
        }
        out.push(tref("mlm_weight", &self.mlm_weight));
        out.push(tref("mlm_bias", &self.mlm_bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![
            tmut("token_embeddings", &mut self.token_embeddings),
            tmut("position_embeddings", &mut self.position_embeddings),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.push_tensors_mut(&format!("layers.{i}."), &mut out);
        }
        out.push(tmut("mlm_weight", &mut self.mlm_weight));
        out.push(tmut("mlm_bias", &mut self.mlm_bias));
        out
    }
}
