//! Multi-task fine-tuning with one optimizer per task, the single-column baseline,
//! and masked-token pretraining.
//!
//! Every epoch visits the tasks in declaration order. A task phase shuffles that
//! task's sequences into mini-batches and updates the shared encoder plus that
//! task's head only, using the task's own Adam moments and learning-rate schedule.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::annotator::{
    accumulate_task_gradients, decide_labels, head_input, probabilities, AnnotationModel, Anchors,
    Target, TaskGradients, TaskKind,
};
use crate::corpus::Corpus;
use crate::encoder::{backward, forward, project_mlm, EncoderParams, Parameters};
use crate::metrics::{csv_err, evaluate, EvalReport};
use crate::serializer::{serialize_columns, serialize_table, serialize_table_pair, EncodedSequence, SerializerConfig};
use crate::tokenizer::{TokenVocabulary, MASK};
use crate::util::{derive_seed, rng, Rng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("adam betas must be in [0, 1) and epsilon positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Multilabel decision threshold used for validation scores.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            optimizer: OptimizerConfig::default(),
            batch_size: 16,
            clip_norm: None,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        self.optimizer.validate()
    }
}

/// How tables become model inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputScheme {
    /// One sequence per table; every column gets its own `[CLS]`.
    #[default]
    Table,
    /// One sequence per annotated column, or per annotated column pair.
    SingleColumn,
}

impl std::str::FromStr for InputScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(InputScheme::Table),
            "single-column" => Ok(InputScheme::SingleColumn),
            other => Err(Error::Config(format!(
                "unknown scheme `{other}` (expected table or single-column)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InputEncoding {
    pub vocab: TokenVocabulary,
    pub serializer: SerializerConfig,
    pub scheme: InputScheme,
}

/// Table column(s) a prediction refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ItemRef {
    Column(usize),
    Pair(usize, usize),
}

/// One encoded sequence with its supervised predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub seq: EncodedSequence,
    pub targets: Vec<Target>,
    pub refs: Vec<ItemRef>,
}

/// Serializes the annotated items of `task`. Returns the sequences and the number
/// of tables dropped for exceeding the column capacity.
pub fn build_sequences(corpus: &Corpus, task: TaskKind, input: &InputEncoding) -> Result<(Vec<LabeledSequence>, usize)> {
    input.serializer.validate()?;
    let mut out = Vec::new();
    let mut dropped = 0;
    for (table, types, rels) in corpus.grouped() {
        let has_items = match task {
            TaskKind::ColumnType => !types.is_empty(),
            TaskKind::ColumnRelation => !rels.is_empty(),
        };
        if !has_items {
            continue;
        }
        match input.scheme {
            InputScheme::Table => {
                let seq = match serialize_table(table, &input.serializer, &input.vocab) {
                    Ok(s) => s,
                    Err(Error::TooManyColumns { .. }) => {
                        dropped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let anchor = |j: usize| seq.anchor(j).expect("every column is serialized");
                let (targets, refs) = match task {
                    TaskKind::ColumnType => types
                        .iter()
                        .map(|a| {
                            (
                                Target {
                                    anchors: Anchors::Column(anchor(a.column_index)),
                                    labels: a.labels.clone(),
                                },
                                ItemRef::Column(a.column_index),
                            )
                        })
                        .unzip(),
                    TaskKind::ColumnRelation => rels
                        .iter()
                        .map(|a| {
                            (
                                Target {
                                    anchors: Anchors::Pair(anchor(a.subject_index), anchor(a.object_index)),
                                    labels: a.labels.clone(),
                                },
                                ItemRef::Pair(a.subject_index, a.object_index),
                            )
                        })
                        .unzip(),
                };
                out.push(LabeledSequence { seq, targets, refs });
            }
            InputScheme::SingleColumn => match task {
                TaskKind::ColumnType => {
                    for a in types {
                        let seq = serialize_columns(table, &[a.column_index], &input.serializer, &input.vocab)?;
                        out.push(LabeledSequence {
                            targets: vec![Target {
                                anchors: Anchors::Column(0),
                                labels: a.labels.clone(),
                            }],
                            refs: vec![ItemRef::Column(a.column_index)],
                            seq,
                        });
                    }
                }
                TaskKind::ColumnRelation => {
                    for a in rels {
                        let seq = serialize_table_pair(
                            table,
                            a.subject_index,
                            a.object_index,
                            &input.serializer,
                            &input.vocab,
                        )?;
                        let mid = seq.anchor(1).expect("pair has two spans");
                        out.push(LabeledSequence {
                            targets: vec![Target {
                                anchors: Anchors::Pair(0, mid),
                                labels: a.labels.clone(),
                            }],
                            refs: vec![ItemRef::Pair(a.subject_index, a.object_index)],
                            seq,
                        });
                    }
                }
            },
        }
    }
    if dropped > 0 {
        log::info!(
            "{} task: dropped {dropped} tables with more than {} columns",
            task.name(),
            input.serializer.max_columns()
        );
    }
    Ok((out, dropped))
}

/// Probability vector of every target in `items`, in order.
pub fn predict_sequences(model: &AnnotationModel, task: TaskKind, items: &[LabeledSequence]) -> Result<Vec<Vec<Array1<f64>>>> {
    let head = model.head(task);
    let mode = model.mode(task);
    items
        .iter()
        .map(|item| {
            let (emb, _) = forward(&model.encoder, &item.seq.ids, None)?;
            Ok(item
                .targets
                .iter()
                .map(|t| {
                    let z = head.logits(head_input(&emb, t.anchors).view());
                    probabilities(z.view(), mode)
                })
                .collect())
        })
        .collect()
}

/// Micro/macro scores of `model` on `items`.
pub fn evaluate_sequences(
    model: &AnnotationModel,
    task: TaskKind,
    items: &[LabeledSequence],
    threshold: f64,
) -> Result<EvalReport> {
    let probs = predict_sequences(model, task, items)?;
    let mode = model.mode(task);
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for (item, ps) in items.iter().zip(&probs) {
        for (t, p) in item.targets.iter().zip(ps) {
            preds.push(decide_labels(p.view(), mode, threshold));
            golds.push(t.labels.clone());
        }
    }
    evaluate(&preds, &golds)
}

/// Adam first and second moments for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam step with gradients multiplied by `grad_scale`.
    pub fn update<P: Parameters + ?Sized, G: Parameters + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &G,
        cfg: &OptimizerConfig,
        lr: f64,
        grad_scale: f64,
    ) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        let grads = grads.tensors();
        for (((_, p), g), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(&grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                let gi = g.data[i] * grad_scale;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.eps);
            }
        }
    }
}

/// Optimizer owned by one task: moments for the encoder and for that task's head,
/// plus the task's own position in its linear-decay schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskOptimizer {
    pub task: TaskKind,
    pub config: OptimizerConfig,
    pub encoder: AdamState,
    pub head: AdamState,
    pub steps_taken: usize,
    pub total_steps: usize,
}

impl TaskOptimizer {
    pub fn new(model: &AnnotationModel, task: TaskKind, config: OptimizerConfig, total_steps: usize) -> Self {
        TaskOptimizer {
            task,
            config,
            encoder: AdamState::new(&model.encoder),
            head: AdamState::new(model.head(task)),
            steps_taken: 0,
            total_steps,
        }
    }

    /// Learning rate of the next step: `lr * (1 - s / S)`.
    pub fn current_lr(&self) -> f64 {
        linear_decay(self.config.lr, self.steps_taken, self.total_steps)
    }

    fn step(&mut self, model: &mut AnnotationModel, grads: &TaskGradients, clip_norm: Option<f64>) {
        let lr = self.current_lr();
        let scale = clip_scale(&[&grads.encoder as &dyn Parameters, &grads.head], clip_norm);
        self.encoder.update(&mut model.encoder, &grads.encoder, &self.config, lr, scale);
        self.head.update(model.head_mut(self.task), &grads.head, &self.config, lr, scale);
        self.steps_taken += 1;
    }
}

pub fn linear_decay(lr: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr;
    }
    (lr * (1.0 - step as f64 / total as f64)).max(0.0)
}

fn clip_scale(grads: &[&dyn Parameters], clip_norm: Option<f64>) -> f64 {
    let Some(max) = clip_norm else { return 1.0 };
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.tensors())
        .map(|t| t.data.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max {
        max / norm
    } else {
        1.0
    }
}

/// Training and validation data for one task.
#[derive(Clone, Copy, Debug)]
pub struct TaskSpec<'a> {
    pub kind: TaskKind,
    pub train: &'a Corpus,
    pub valid: &'a Corpus,
    pub batch_size: Option<usize>,
    pub optimizer: Option<OptimizerConfig>,
}

impl<'a> TaskSpec<'a> {
    pub fn new(kind: TaskKind, train: &'a Corpus, valid: &'a Corpus) -> Self {
        TaskSpec {
            kind,
            train,
            valid,
            batch_size: None,
            optimizer: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub task: TaskKind,
    pub train_loss: f64,
    pub val_f1: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainHistory {
    /// `epoch,task,loss,val_f1` rows. Wall time is kept out so that runs with equal
    /// seeds produce identical files; see [`TrainHistory::write_timings_csv`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "task", "loss", "val_f1"]).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.task.name().to_string(),
                r.train_loss.to_string(),
                r.val_f1.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timings_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "task", "seconds"]).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([r.epoch.to_string(), r.task.name().to_string(), r.seconds.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean validation F1 over the tasks of each epoch, in epoch order.
fn epoch_scores(history: &TrainHistory) -> Vec<f64> {
    let mut scores: Vec<(f64, usize)> = Vec::new();
    for r in &history.records {
        if scores.len() < r.epoch {
            scores.resize(r.epoch, (0.0, 0));
        }
        let s = &mut scores[r.epoch - 1];
        s.0 += r.val_f1;
        s.1 += 1;
    }
    scores
        .into_iter()
        .map(|(sum, n)| if n == 0 { f64::NEG_INFINITY } else { sum / n as f64 })
        .collect()
}

/// 1-based epoch with the highest mean task validation F1; ties go to the earliest.
pub fn select_checkpoint(history: &TrainHistory) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for (i, s) in epoch_scores(history).into_iter().enumerate() {
        if s > best.1 {
            best = (i + 1, s);
        }
    }
    best.0
}

/// Hooks around every task phase, for instrumentation.
pub trait TrainObserver {
    fn phase_started(&mut self, _epoch: usize, _task: TaskKind, _model: &AnnotationModel, _optimizers: &[TaskOptimizer]) {}
    fn phase_finished(&mut self, _epoch: usize, _task: TaskKind, _model: &AnnotationModel, _optimizers: &[TaskOptimizer]) {}
}

impl TrainObserver for () {}

struct PreparedTask {
    kind: TaskKind,
    train: Vec<LabeledSequence>,
    valid: Vec<LabeledSequence>,
    batch_size: usize,
}

fn prepare(task: &TaskSpec<'_>, cfg: &TrainConfig, input: &InputEncoding) -> Result<PreparedTask> {
    let (train, dropped) = build_sequences(task.train, task.kind, input)?;
    if train.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} task has no trainable items ({dropped} tables exceed the {}-column capacity)",
            task.kind.name(),
            input.serializer.max_columns()
        )));
    }
    let (mut valid, _) = build_sequences(task.valid, task.kind, input)?;
    if valid.is_empty() {
        log::warn!("{} task: empty validation set, scoring on training data", task.kind.name());
        valid = train.clone();
    }
    Ok(PreparedTask {
        kind: task.kind,
        train,
        valid,
        batch_size: task.batch_size.unwrap_or(cfg.batch_size),
    })
}

/// Multi-task fine-tuning. Returns the parameters of the best validation epoch and
/// the full history.
pub fn train_multitask(
    model: &AnnotationModel,
    tasks: &[TaskSpec<'_>],
    cfg: &TrainConfig,
    input: &InputEncoding,
    observer: &mut dyn TrainObserver,
) -> Result<(AnnotationModel, TrainHistory)> {
    cfg.validate()?;
    model.validate()?;
    if tasks.is_empty() {
        return Err(Error::Config("no tasks to train".into()));
    }
    for (i, t) in tasks.iter().enumerate() {
        if tasks[..i].iter().any(|o| o.kind == t.kind) {
            return Err(Error::Config(format!("task `{}` listed twice", t.kind.name())));
        }
        if let Some(o) = &t.optimizer {
            o.validate()?;
        }
    }
    let prepared = tasks
        .iter()
        .map(|t| prepare(t, cfg, input))
        .collect::<Result<Vec<_>>>()?;

    let mut model = model.clone();
    let mut optimizers: Vec<TaskOptimizer> = prepared
        .iter()
        .zip(tasks)
        .map(|(p, t)| {
            let per_epoch = p.train.len().div_ceil(p.batch_size);
            TaskOptimizer::new(&model, p.kind, t.optimizer.unwrap_or(cfg.optimizer), per_epoch * cfg.epochs)
        })
        .collect();
    let mut shuffle_rngs: Vec<Rng> = (0..tasks.len())
        .map(|i| rng(derive_seed(cfg.seed, 0x5348_0000 + i as u64)))
        .collect();
    let mut dropout_rng = rng(derive_seed(cfg.seed, 0x4452_4f50));
    let use_dropout = model.encoder.config.dropout_rate > 0.0;
    let mut grads: Vec<TaskGradients> = prepared
        .iter()
        .map(|p| TaskGradients::zeros_for(&model, p.kind))
        .collect();

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, AnnotationModel)> = None;
    for epoch in 1..=cfg.epochs {
        for (ti, task) in prepared.iter().enumerate() {
            observer.phase_started(epoch, task.kind, &model, &optimizers);
            let started = Instant::now();
            let mut order: Vec<usize> = (0..task.train.len()).collect();
            order.shuffle(&mut shuffle_rngs[ti]);
            let mut loss_sum = 0.0;
            let mut item_count = 0usize;
            for batch in order.chunks(task.batch_size) {
                let g = &mut grads[ti];
                g.clear();
                let n: usize = batch.iter().map(|&i| task.train[i].targets.len()).sum();
                let weight = 1.0 / n as f64;
                for &i in batch {
                    let item = &task.train[i];
                    let dropout = if use_dropout { Some(&mut dropout_rng) } else { None };
                    loss_sum += accumulate_task_gradients(&model, task.kind, &item.seq.ids, &item.targets, weight, dropout, g)
                        .map_err(|e| with_phase(e, epoch, task.kind))?;
                }
                item_count += n;
                optimizers[ti].step(&mut model, g, cfg.clip_norm);
            }
            if !model.encoder.all_finite() || !model.head(task.kind).all_finite() {
                return Err(Error::NonFinite {
                    context: format!("parameters after epoch {epoch}, task {}", task.kind.name()),
                });
            }
            let val = evaluate_sequences(&model, task.kind, &task.valid, cfg.threshold)?;
            history.records.push(HistoryRecord {
                epoch,
                task: task.kind,
                train_loss: loss_sum / item_count as f64,
                val_f1: val.micro.f1,
                seconds: started.elapsed().as_secs_f64(),
            });
            log::debug!(
                "epoch {epoch} {}: loss {:.4} val_f1 {:.4}",
                task.kind.name(),
                loss_sum / item_count as f64,
                val.micro.f1
            );
            observer.phase_finished(epoch, task.kind, &model, &optimizers);
        }
        let score = epoch_scores(&history)[epoch - 1];
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model.clone()));
        }
    }
    history.best_epoch = select_checkpoint(&history);
    let (_, best_model) = best.expect("at least one epoch");
    Ok((best_model, history))
}

fn with_phase(e: Error, epoch: usize, task: TaskKind) -> Error {
    match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("{context} at epoch {epoch}, task {}", task.name()),
        },
        other => other,
    }
}

/// The single-column baseline: the same loop with one task and one sequence per
/// annotated column or column pair.
pub fn train_single_column(
    model: &AnnotationModel,
    task: TaskSpec<'_>,
    cfg: &TrainConfig,
    input: &InputEncoding,
) -> Result<(AnnotationModel, TrainHistory)> {
    let input = InputEncoding {
        scheme: InputScheme::SingleColumn,
        ..input.clone()
    };
    train_multitask(model, &[task], cfg, &input, &mut ())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub mask_prob: f64,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlmConfig {
    fn default() -> Self {
        MlmConfig {
            mask_prob: 0.15,
            epochs: 10,
            optimizer: OptimizerConfig {
                lr: 1e-3,
                ..OptimizerConfig::default()
            },
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Masked-token pretraining of `params` on every table of `corpus`.
///
/// Each epoch masks every non-special token independently with `mask_prob` and
/// minimizes the cross-entropy of the original tokens at masked positions. Returns
/// the updated parameters and the per-epoch mean masked cross-entropy.
pub fn pretrain_mlm(
    params: &EncoderParams,
    corpus: &Corpus,
    cfg: &MlmConfig,
    input: &InputEncoding,
) -> Result<(EncoderParams, Vec<f64>)> {
    if !(cfg.mask_prob > 0.0 && cfg.mask_prob < 1.0) {
        return Err(Error::Config(format!(
            "mask probability must be in (0, 1), got {}",
            cfg.mask_prob
        )));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    cfg.optimizer.validate()?;
    let sequences = mlm_sequences(corpus, input)?;
    if sequences.is_empty() {
        return Err(Error::EmptyInput("no sequences to pretrain on".into()));
    }
    let mut params = params.clone();
    let mut adam = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut r = rng(derive_seed(cfg.seed, 0x4d4c_4d00));
    let mut dropout_rng = rng(derive_seed(cfg.seed, 0x4d4c_4d01));
    let use_dropout = params.config.dropout_rate > 0.0;
    let per_epoch = sequences.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut step = 0;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..sequences.len()).collect();
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        let mut masked_total = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let masked: Vec<(Vec<u32>, Vec<usize>)> = batch
                .iter()
                .map(|&i| mask_sequence(&sequences[i], cfg.mask_prob, &mut r))
                .collect();
            let n: usize = masked.iter().map(|(_, p)| p.len()).sum();
            if n == 0 {
                continue;
            }
            grads.fill_zero();
            for (&i, (ids, positions)) in batch.iter().zip(&masked) {
                if positions.is_empty() {
                    continue;
                }
                let dropout = if use_dropout { Some(&mut dropout_rng) } else { None };
                loss_sum += mlm_gradients(&params, ids, positions, &sequences[i], 1.0 / n as f64, dropout, &mut grads)?;
            }
            masked_total += n;
            adam.update(&mut params, &grads, &cfg.optimizer, linear_decay(cfg.optimizer.lr, step, total), 1.0);
            step += 1;
        }
        if masked_total == 0 {
            return Err(Error::EmptyInput(format!(
                "epoch {epoch} produced no masked positions; corpus too small"
            )));
        }
        let mean = loss_sum / masked_total as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite {
                context: format!("masked-token loss at epoch {epoch}"),
            });
        }
        log::debug!("mlm epoch {epoch}: loss {mean:.4}");
        curve.push(mean);
    }
    Ok((params, curve))
}

fn mlm_sequences(corpus: &Corpus, input: &InputEncoding) -> Result<Vec<Vec<u32>>> {
    let mut out = Vec::new();
    for table in corpus.tables() {
        match input.scheme {
            InputScheme::Table => match serialize_table(table, &input.serializer, &input.vocab) {
                Ok(s) => out.push(s.ids),
                Err(Error::TooManyColumns { .. }) => {}
                Err(e) => return Err(e),
            },
            InputScheme::SingleColumn => {
                for j in 0..table.num_columns() {
                    out.push(serialize_columns(table, &[j], &input.serializer, &input.vocab)?.ids);
                }
            }
        }
    }
    Ok(out)
}

fn mask_sequence(ids: &[u32], prob: f64, r: &mut Rng) -> (Vec<u32>, Vec<usize>) {
    let mut masked = ids.to_vec();
    let mut positions = Vec::new();
    for (i, id) in masked.iter_mut().enumerate() {
        if !TokenVocabulary::is_special(*id) && r.random::<f64>() < prob {
            *id = MASK;
            positions.push(i);
        }
    }
    (masked, positions)
}

/// Adds `weight`-scaled masked-token cross-entropy gradients into `grads`; returns
/// the unweighted loss sum.
fn mlm_gradients(
    params: &EncoderParams,
    ids: &[u32],
    positions: &[usize],
    original: &[u32],
    weight: f64,
    dropout: Option<&mut Rng>,
    grads: &mut EncoderParams,
) -> Result<f64> {
    let (out, cache) = forward(params, ids, dropout)?;
    let logits = project_mlm(params, &out, positions);
    let mut d_logits = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (k, row) in logits.axis_iter(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let gold = original[positions[k]] as usize;
        loss += lse - row[gold];
        let mut d = d_logits.row_mut(k);
        d.assign(&row.mapv(|v| (v - lse).exp()));
        d[gold] -= 1.0;
        d *= weight;
    }
    let hidden = out.0.select(Axis(0), positions);
    grads.mlm_weight += &hidden.t().dot(&d_logits);
    grads.mlm_bias += &d_logits.sum_axis(Axis(0));
    let d_hidden = d_logits.dot(&params.mlm_weight.t());
    let mut d_out = Array2::zeros(out.0.raw_dim());
    for (k, &p) in positions.iter().enumerate() {
        let mut r = d_out.row_mut(p);
        r += &d_hidden.row(k);
    }
    backward(params, &cache, d_out, grads);
    Ok(loss)
}
