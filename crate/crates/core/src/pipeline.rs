//! Experiment configuration and end-to-end runs: vocabulary, model construction,
//! training, test evaluation, and prediction dumps.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotator::{decide_labels, AnnotationModel, TaskKind};
use crate::checkpoint::{EncoderBundle, ModelBundle};
use crate::corpus::{Corpus, LabelKind, LabelMode, Splits};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::metrics::{evaluate, EvalReport};
use crate::serializer::SerializerConfig;
use crate::tokenizer::build_token_vocabulary;
use crate::trainer::{
    build_sequences, predict_sequences, train_multitask, InputEncoding, InputScheme, ItemRef,
    OptimizerConfig, TaskSpec, TrainConfig, TrainHistory, TrainObserver,
};
use crate::{Error, Result};

pub use crate::util::write_atomic;

/// Flat experiment configuration, loadable from TOML. Every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub epochs: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub threshold: f64,
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
    pub max_tokens_per_column: usize,
    pub include_metadata: bool,
    pub vocab_max_size: usize,
    pub vocab_min_freq: usize,
    pub tasks: Vec<TaskKind>,
    pub type_mode: LabelMode,
    pub relation_mode: LabelMode,
    pub scheme: InputScheme,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        ExperimentConfig {
            epochs: 30,
            lr: opt.lr,
            adam_beta1: opt.beta1,
            adam_beta2: opt.beta2,
            adam_eps: opt.eps,
            batch_size: 16,
            clip_norm: None,
            threshold: 0.5,
            num_layers: 2,
            num_heads: 4,
            d_model: 64,
            d_ff: 256,
            max_seq_len: 512,
            dropout: 0.1,
            max_tokens_per_column: 32,
            include_metadata: false,
            vocab_max_size: 30_000,
            vocab_min_freq: 1,
            tasks: vec![TaskKind::ColumnType, TaskKind::ColumnRelation],
            type_mode: LabelMode::Multiclass,
            relation_mode: LabelMode::Multiclass,
            scheme: InputScheme::Table,
            train_fraction: 0.8,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.serializer_config().validate()?;
        self.encoder_config(6).validate()?;
        if self.tasks.is_empty() {
            return Err(Error::Config("tasks must list at least one task".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must be in [0, 1], got {}", self.threshold)));
        }
        if self.vocab_max_size <= crate::tokenizer::RESERVED.len() {
            return Err(Error::Config(format!(
                "vocab_max_size must exceed {}",
                crate::tokenizer::RESERVED.len()
            )));
        }
        Ok(())
    }

    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train_fraction, self.valid_fraction, self.test_fraction)
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            optimizer: self.optimizer(),
            batch_size: self.batch_size,
            clip_norm: self.clip_norm,
            seed: self.seed,
            threshold: self.threshold,
        }
    }

    pub fn serializer_config(&self) -> SerializerConfig {
        SerializerConfig {
            max_tokens_per_column: self.max_tokens_per_column,
            max_seq_len: self.max_seq_len,
            include_metadata: self.include_metadata,
        }
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_seq_len: self.max_seq_len,
            vocab_size,
            dropout_rate: self.dropout,
            seed: self.seed,
        }
    }

    /// Token vocabulary from `train` plus the configured serializer and scheme.
    pub fn input_encoding(&self, train: &Corpus) -> Result<InputEncoding> {
        Ok(InputEncoding {
            vocab: build_token_vocabulary(train, self.vocab_max_size, self.vocab_min_freq)?,
            serializer: self.serializer_config(),
            scheme: self.scheme,
        })
    }
}

/// Output of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
    /// Test-split report per trained task; tasks without test items are omitted.
    pub test_reports: Vec<(TaskKind, EvalReport)>,
}

impl ExperimentRun {
    pub fn report(&self, task: TaskKind) -> Option<&EvalReport> {
        self.test_reports.iter().find(|(t, _)| *t == task).map(|(_, r)| r)
    }
}

/// Builds a fresh model (or wraps `pretrained`), trains the configured tasks jointly
/// on `splits.train`, selects by `splits.valid`, and evaluates on `splits.test`.
pub fn run_experiment(
    splits: &Splits,
    cfg: &ExperimentConfig,
    pretrained: Option<&EncoderBundle>,
    observer: &mut dyn TrainObserver,
) -> Result<ExperimentRun> {
    cfg.validate()?;
    splits.train.check_mode(cfg.type_mode, cfg.relation_mode)?;
    let (encoder, input) = match pretrained {
        Some(p) => (
            p.encoder.clone(),
            InputEncoding {
                scheme: cfg.scheme,
                ..p.input.clone()
            },
        ),
        None => {
            let input = cfg.input_encoding(&splits.train)?;
            let encoder = EncoderParams::init(&cfg.encoder_config(input.vocab.len()))?;
            (encoder, input)
        }
    };
    let type_labels = splits.train.type_vocab().clone();
    let relation_labels = splits.train.relation_vocab().clone();
    let model = AnnotationModel::new(
        encoder,
        type_labels.len(),
        relation_labels.len(),
        cfg.type_mode,
        cfg.relation_mode,
    );
    let tasks: Vec<TaskSpec<'_>> = cfg
        .tasks
        .iter()
        .map(|&k| TaskSpec::new(k, &splits.train, &splits.valid))
        .collect();
    let (model, history) = train_multitask(&model, &tasks, &cfg.train_config(), &input, observer)?;
    let bundle = ModelBundle {
        model,
        input,
        type_labels,
        relation_labels,
    };
    let mut test_reports = Vec::new();
    for &task in &cfg.tasks {
        match evaluate_bundle(&bundle, &splits.test, task, cfg.threshold) {
            Ok(r) => test_reports.push((task, r)),
            Err(Error::EmptyInput(_)) => log::warn!("no {} items in the test split", task.name()),
            Err(e) => return Err(e),
        }
    }
    Ok(ExperimentRun {
        bundle,
        history,
        test_reports,
    })
}

/// Scores `bundle` on the annotated items of `corpus`.
pub fn evaluate_bundle(bundle: &ModelBundle, corpus: &Corpus, task: TaskKind, threshold: f64) -> Result<EvalReport> {
    let records = predict_corpus(bundle, corpus, task, threshold)?;
    let (preds, golds) = label_ids(&records, bundle.labels(label_kind(task)))?;
    evaluate(&preds, &golds)
}

pub fn label_kind(task: TaskKind) -> LabelKind {
    match task {
        TaskKind::ColumnType => LabelKind::Type,
        TaskKind::ColumnRelation => LabelKind::Relation,
    }
}

/// One line of a prediction dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub table: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subj: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj: Option<usize>,
    pub probs: Vec<f64>,
    pub pred: Vec<String>,
    pub gold: Vec<String>,
}

impl PredictionRecord {
    pub fn task(&self) -> Result<TaskKind> {
        match (self.col, self.subj, self.obj) {
            (Some(_), None, None) => Ok(TaskKind::ColumnType),
            (None, Some(_), Some(_)) => Ok(TaskKind::ColumnRelation),
            _ => Err(Error::Config(format!(
                "prediction for table `{}` needs either col or subj and obj",
                self.table
            ))),
        }
    }
}

fn names(vocab: &crate::corpus::LabelVocabulary, ids: &[usize]) -> Vec<String> {
    ids.iter()
        .map(|&i| vocab.name(i).unwrap_or("?").to_string())
        .collect()
}

/// Predictions for every annotated column (type task) or pair (relation task).
pub fn predict_corpus(bundle: &ModelBundle, corpus: &Corpus, task: TaskKind, threshold: f64) -> Result<Vec<PredictionRecord>> {
    let labels = bundle.labels(label_kind(task));
    let corpus_labels = match task {
        TaskKind::ColumnType => corpus.type_vocab(),
        TaskKind::ColumnRelation => corpus.relation_vocab(),
    };
    let (items, _) = build_sequences(corpus, task, &bundle.input)?;
    let probs = predict_sequences(&bundle.model, task, &items)?;
    let mode = bundle.model.mode(task);
    let mut out = Vec::new();
    for (item, ps) in items.iter().zip(probs) {
        for ((target, r), p) in item.targets.iter().zip(&item.refs).zip(ps) {
            let (col, subj, obj) = match *r {
                ItemRef::Column(j) => (Some(j), None, None),
                ItemRef::Pair(a, b) => (None, Some(a), Some(b)),
            };
            out.push(PredictionRecord {
                table: item.seq.source.table_id.clone(),
                col,
                subj,
                obj,
                pred: names(labels, &decide_labels(p.view(), mode, threshold)),
                gold: names(corpus_labels, &target.labels),
                probs: p.to_vec(),
            });
        }
    }
    Ok(out)
}

/// Converts the names in `records` to ids of `vocab` for scoring. Unknown gold names
/// get fresh ids so they count as misses.
pub fn label_ids(records: &[PredictionRecord], vocab: &crate::corpus::LabelVocabulary) -> Result<(Vec<Vec<usize>>, Vec<Vec<usize>>)> {
    let mut extra: HashMap<String, usize> = HashMap::new();
    let mut id = |name: &str| match vocab.id(name) {
        Some(i) => i,
        None => {
            let next = vocab.len() + extra.len();
            *extra.entry(name.to_string()).or_insert(next)
        }
    };
    let mut preds = Vec::with_capacity(records.len());
    let mut golds = Vec::with_capacity(records.len());
    for r in records {
        preds.push(r.pred.iter().map(|n| id(n)).collect());
        golds.push(r.gold.iter().map(|n| id(n)).collect());
    }
    Ok((preds, golds))
}

pub fn write_predictions<W: Write>(records: &[PredictionRecord], mut writer: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_predictions<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Scores a prediction dump against the gold annotations of `gold` for `task`.
///
/// Predictions are matched to gold items by table and column (or pair). Gold items
/// without a prediction count as empty predictions.
pub fn evaluate_dump(records: &[PredictionRecord], gold: &Corpus, task: TaskKind) -> Result<EvalReport> {
    let vocab = match task {
        TaskKind::ColumnType => gold.type_vocab(),
        TaskKind::ColumnRelation => gold.relation_vocab(),
    };
    let mut by_key: HashMap<(String, ItemRef), &PredictionRecord> = HashMap::new();
    for r in records {
        if r.task()? != task {
            continue;
        }
        let key = match (r.col, r.subj, r.obj) {
            (Some(c), _, _) => ItemRef::Column(c),
            (_, Some(a), Some(b)) => ItemRef::Pair(a, b),
            _ => unreachable!("task() checked the shape"),
        };
        by_key.insert((r.table.clone(), key), r);
    }
    let gold_items: Vec<(String, ItemRef, Vec<usize>)> = match task {
        TaskKind::ColumnType => gold
            .type_annotations()
            .iter()
            .map(|a| (a.table_id.clone(), ItemRef::Column(a.column_index), a.labels.clone()))
            .collect(),
        TaskKind::ColumnRelation => gold
            .relation_annotations()
            .iter()
            .map(|a| (a.table_id.clone(), ItemRef::Pair(a.subject_index, a.object_index), a.labels.clone()))
            .collect(),
    };
    let mut extra: HashMap<String, usize> = HashMap::new();
    let mut preds = Vec::with_capacity(gold_items.len());
    let mut golds = Vec::with_capacity(gold_items.len());
    for (table, key, labels) in gold_items {
        let pred = by_key
            .get(&(table, key))
            .map(|r| {
                r.pred
                    .iter()
                    .map(|n| {
                        vocab.id(n).unwrap_or_else(|| {
                            let next = vocab.len() + extra.len();
                            *extra.entry(n.clone()).or_insert(next)
                        })
                    })
                    .collect()
            })
            .unwrap_or_default();
        preds.push(pred);
        golds.push(labels);
    }
    evaluate(&preds, &golds)
}
