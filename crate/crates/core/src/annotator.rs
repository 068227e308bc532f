//! Column type and column relation heads on top of the shared encoder.
//!
//! The type head maps one column's `[CLS]` output (width `d`) to `|C_type|` logits;
//! the relation head maps the subject-then-object concatenation (width `2d`) to
//! `|C_rel|` logits. Multiclass tasks use softmax with cross-entropy, multilabel
//! tasks use element-wise logistic with binary cross-entropy.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::LabelMode;
use crate::encoder::{
    backward, forward, ContextEmbeddings, EncoderParams, Parameters, TensorRef,
};
use crate::encoder::{tmut, tref, trunc_normal};
use crate::serializer::EncodedSequence;
use crate::util::{derive_seed, rng, Rng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[serde(rename = "type")]
    ColumnType,
    #[serde(rename = "relation")]
    ColumnRelation,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ColumnType => "type",
            TaskKind::ColumnRelation => "relation",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "type" => Ok(TaskKind::ColumnType),
            "relation" => Ok(TaskKind::ColumnRelation),
            other => Err(Error::Config(format!(
                "unknown task `{other}` (expected type or relation)"
            ))),
        }
    }
}

/// Affine map `x -> x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseHead {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseHead {
    pub fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        DenseHead {
            weight: trunc_normal(rng, (inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseHead {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn logits(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn zeros_like(&self) -> Self {
        DenseHead::zeros(self.inputs(), self.outputs())
    }
}

impl Parameters for DenseHead {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![tref("weight", &self.weight), tref("bias", &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![tmut("weight", &mut self.weight), tmut("bias", &mut self.bias)]
    }
}

/// Shared encoder plus one head per task.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationModel {
    pub encoder: EncoderParams,
    pub type_head: DenseHead,
    pub relation_head: DenseHead,
    pub type_mode: LabelMode,
    pub relation_mode: LabelMode,
}

impl AnnotationModel {
    /// Wraps `encoder` with randomly initialized heads seeded from the encoder seed.
    pub fn new(
        encoder: EncoderParams,
        num_types: usize,
        num_relations: usize,
        type_mode: LabelMode,
        relation_mode: LabelMode,
    ) -> Self {
        let d = encoder.config.d_model;
        let mut r = rng(derive_seed(encoder.config.seed, 0x4845_4144));
        let type_head = DenseHead::init(d, num_types, &mut r);
        let relation_head = DenseHead::init(2 * d, num_relations, &mut r);
        AnnotationModel {
            encoder,
            type_head,
            relation_head,
            type_mode,
            relation_mode,
        }
    }

    pub fn head(&self, task: TaskKind) -> &DenseHead {
        match task {
            TaskKind::ColumnType => &self.type_head,
            TaskKind::ColumnRelation => &self.relation_head,
        }
    }

    pub fn head_mut(&mut self, task: TaskKind) -> &mut DenseHead {
        match task {
            TaskKind::ColumnType => &mut self.type_head,
            TaskKind::ColumnRelation => &mut self.relation_head,
        }
    }

    pub fn mode(&self, task: TaskKind) -> LabelMode {
        match task {
            TaskKind::ColumnType => self.type_mode,
            TaskKind::ColumnRelation => self.relation_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.encoder.config.d_model;
        if self.type_head.inputs() != d || self.relation_head.inputs() != 2 * d {
            return Err(Error::Shape(format!(
                "head input widths ({}, {}) do not match d_model {d}",
                self.type_head.inputs(),
                self.relation_head.inputs()
            )));
        }
        Ok(())
    }
}

/// Softmax (multiclass) or element-wise logistic (multilabel) of a logit vector.
pub fn probabilities(logits: ArrayView1<'_, f64>, mode: LabelMode) -> Array1<f64> {
    match mode {
        LabelMode::Multiclass => {
            let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let exp = logits.mapv(|v| (v - max).exp());
            let sum = exp.sum();
            exp / sum
        }
        LabelMode::Multilabel => logits.mapv(sigmoid),
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_gold(gold: &[usize], classes: usize, mode: LabelMode) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::Config("empty gold label set".into()));
    }
    if let Some(&bad) = gold.iter().find(|&&g| g >= classes) {
        return Err(Error::OutOfRange {
            index: bad,
            len: classes,
        });
    }
    if mode == LabelMode::Multiclass && gold.len() != 1 {
        return Err(Error::Config(format!(
            "multiclass item with {} gold labels",
            gold.len()
        )));
    }
    Ok(())
}

/// Loss of one item and its gradient with respect to the logits.
///
/// Multiclass: `logsumexp(z) - z_gold`. Multilabel: binary cross-entropy averaged
/// over the classes.
pub fn item_loss(logits: ArrayView1<'_, f64>, gold: &[usize], mode: LabelMode) -> Result<(f64, Array1<f64>)> {
    let classes = logits.len();
    check_gold(gold, classes, mode)?;
    match mode {
        LabelMode::Multiclass => {
            let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            let mut grad = logits.mapv(|v| (v - lse).exp());
            grad[gold[0]] -= 1.0;
            Ok((lse - logits[gold[0]], grad))
        }
        LabelMode::Multilabel => {
            let n = classes as f64;
            let mut loss = 0.0;
            let mut grad = Array1::zeros(classes);
            for (c, &z) in logits.iter().enumerate() {
                let y = if gold.contains(&c) { 1.0 } else { 0.0 };
                loss += z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
                grad[c] = (sigmoid(z) - y) / n;
            }
            Ok((loss / n, grad))
        }
    }
}

/// Mean loss over the annotated items.
pub fn task_loss(logits: &[Array1<f64>], golds: &[Vec<usize>], mode: LabelMode) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("no annotated items in the batch".into()));
    }
    if logits.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold records",
            logits.len(),
            golds.len()
        )));
    }
    let mut total = 0.0;
    for (z, g) in logits.iter().zip(golds) {
        total += item_loss(z.view(), g, mode)?.0;
    }
    Ok(total / logits.len() as f64)
}

/// Label decision for one item.
///
/// Multiclass picks the argmax (lowest id on ties). Multilabel keeps every class at
/// or above `threshold`, falling back to the argmax when none qualifies.
pub fn decide_labels(probs: ArrayView1<'_, f64>, mode: LabelMode, threshold: f64) -> Vec<usize> {
    let argmax = probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0;
    match mode {
        LabelMode::Multiclass => vec![argmax],
        LabelMode::Multilabel => {
            let chosen: Vec<usize> = probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p >= threshold)
                .map(|(i, _)| i)
                .collect();
            if chosen.is_empty() {
                vec![argmax]
            } else {
                chosen
            }
        }
    }
}

fn anchor(seq: &EncodedSequence, j: usize) -> Result<usize> {
    seq.anchor(j).ok_or(Error::OutOfRange {
        index: j,
        len: seq.num_columns(),
    })
}

fn pair_input(emb: &ContextEmbeddings, a: usize, b: usize) -> Array1<f64> {
    concatenate(Axis(0), &[emb.row(a), emb.row(b)]).expect("equal-width rows")
}

/// Type probabilities per serialized column, computed from given encoder outputs.
pub fn type_probs_from_embeddings(
    model: &AnnotationModel,
    emb: &ContextEmbeddings,
    seq: &EncodedSequence,
) -> Result<Vec<Array1<f64>>> {
    (0..seq.num_columns())
        .map(|j| {
            let pos = anchor(seq, j)?;
            let z = model.type_head.logits(emb.row(pos));
            Ok(probabilities(z.view(), model.type_mode))
        })
        .collect()
}

/// Relation probabilities per `(subject, object)` pair of serialized column indices.
pub fn relation_probs_from_embeddings(
    model: &AnnotationModel,
    emb: &ContextEmbeddings,
    seq: &EncodedSequence,
    pairs: &[(usize, usize)],
) -> Result<Vec<Array1<f64>>> {
    pairs
        .iter()
        .map(|&(a, b)| {
            let x = pair_input(emb, anchor(seq, a)?, anchor(seq, b)?);
            let z = model.relation_head.logits(x.view());
            Ok(probabilities(z.view(), model.relation_mode))
        })
        .collect()
}

fn check_model_input(model: &AnnotationModel, seq: &EncodedSequence) -> Result<()> {
    model.validate()?;
    if seq.num_columns() == 0 {
        return Err(Error::EmptyInput("sequence has no serialized columns".into()));
    }
    Ok(())
}

pub fn predict_types(model: &AnnotationModel, seq: &EncodedSequence) -> Result<Vec<Array1<f64>>> {
    check_model_input(model, seq)?;
    let (emb, _) = forward(&model.encoder, &seq.ids, None)?;
    type_probs_from_embeddings(model, &emb, seq)
}

pub fn predict_relations(
    model: &AnnotationModel,
    seq: &EncodedSequence,
    pairs: &[(usize, usize)],
) -> Result<Vec<Array1<f64>>> {
    check_model_input(model, seq)?;
    for &(a, b) in pairs {
        anchor(seq, a)?;
        anchor(seq, b)?;
    }
    let (emb, _) = forward(&model.encoder, &seq.ids, None)?;
    relation_probs_from_embeddings(model, &emb, seq, pairs)
}

/// Sequence positions feeding one prediction: one column or a subject/object pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Anchors {
    Column(usize),
    Pair(usize, usize),
}

/// One supervised prediction inside an encoded sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub anchors: Anchors,
    pub labels: Vec<usize>,
}

/// Gradient accumulator for encoder plus one head.
#[derive(Clone, Debug)]
pub struct TaskGradients {
    pub encoder: EncoderParams,
    pub head: DenseHead,
}

impl TaskGradients {
    pub fn zeros_for(model: &AnnotationModel, task: TaskKind) -> Self {
        TaskGradients {
            encoder: model.encoder.zeros_like(),
            head: model.head(task).zeros_like(),
        }
    }

    pub fn clear(&mut self) {
        self.encoder.fill_zero();
        self.head.fill_zero();
    }
}

pub(crate) fn head_input(emb: &ContextEmbeddings, anchors: Anchors) -> Array1<f64> {
    match anchors {
        Anchors::Column(p) => emb.row(p).to_owned(),
        Anchors::Pair(a, b) => pair_input(emb, a, b),
    }
}

/// Forward, loss, and backward for the targets of one sequence.
///
/// Each item's loss is multiplied by `weight` (the caller's `1 / batch_items`) before
/// its gradient is accumulated into `grads`. Returns the unweighted loss sum.
pub fn accumulate_task_gradients(
    model: &AnnotationModel,
    task: TaskKind,
    ids: &[crate::tokenizer::TokenId],
    targets: &[Target],
    weight: f64,
    dropout: Option<&mut Rng>,
    grads: &mut TaskGradients,
) -> Result<f64> {
    let head = model.head(task);
    let mode = model.mode(task);
    let d = model.encoder.config.d_model;
    let (emb, cache) = forward(&model.encoder, ids, dropout)?;
    let mut d_emb = Array2::zeros(emb.matrix().raw_dim());
    let mut total = 0.0;
    for t in targets {
        let x = head_input(&emb, t.anchors);
        let z = head.logits(x.view());
        let (loss, dz) = item_loss(z.view(), &t.labels, mode)?;
        total += loss;
        let dz = dz * weight;
        // dW += x^T dz, db += dz, dx = W dz
        for (mut row, &xi) in grads.head.weight.rows_mut().into_iter().zip(x.iter()) {
            row.scaled_add(xi, &dz);
        }
        grads.head.bias += &dz;
        let dx = head.weight.dot(&dz);
        match t.anchors {
            Anchors::Column(p) => {
                let mut r = d_emb.row_mut(p);
                r += &dx;
            }
            Anchors::Pair(a, b) => {
                let mut ra = d_emb.row_mut(a);
                ra += &dx.slice(s![..d]);
                let mut rb = d_emb.row_mut(b);
                rb += &dx.slice(s![d..]);
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: format!("{} loss", task.name()),
        });
    }
    backward(&model.encoder, &cache, d_emb, &mut grads.encoder);
    Ok(total)
}
