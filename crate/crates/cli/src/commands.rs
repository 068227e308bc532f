//! Subcommand arguments and implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Args;
use colannot::analysis::{
    column_dependency_matrix, extract_column_embeddings, kmeans, learning_curve, nested_subsets,
    shuffle_robustness, token_budget_sweep, ShuffleMode, SweepReport,
};
use colannot::annotator::TaskKind;
use colannot::checkpoint::{EncoderBundle, ModelBundle};
use colannot::corpus::{
    generate_bigram_corpus, generate_synthetic_corpus, load_corpus, split_corpus, write_corpus, Corpus,
    LabelMode, Splits, SyntheticSpec,
};
use colannot::encoder::EncoderParams;
use colannot::metrics::{clustering_scores, EvalReport};
use colannot::pipeline::{
    evaluate_bundle, evaluate_dump, predict_corpus, read_predictions, run_experiment, write_atomic,
    write_predictions, ExperimentConfig,
};
use colannot::serializer::serialize_table;
use colannot::tokenizer::{build_token_vocabulary, TokenVocabulary};
use colannot::trainer::{pretrain_mlm, InputEncoding, MlmConfig};
use colannot::Error;
use serde::{Deserialize, Serialize};

use crate::args::{base_config, finish_config, ArchArgs, GlobalArgs, TrainArgs};
use crate::failure::Failure;
use crate::manifest::RunManifest;

const ALL_TASKS: [TaskKind; 2] = [TaskKind::ColumnType, TaskKind::ColumnRelation];

/// Names the file in I/O and checkpoint errors.
fn at(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| match e {
        Error::Io(_) | Error::Json(_) | Error::Checkpoint(_) => Failure::Runtime(format!("{}: {e}", path.display())),
        other => other.into(),
    }
}

fn load_data(path: &Path, m: &mut RunManifest) -> Result<Corpus, Failure> {
    m.input(path);
    // Multi-label parsing accepts every valid file; training checks the configured modes.
    load_corpus(path, LabelMode::Multilabel).map_err(at(path))
}

/// Prints to stdout, ignoring a closed pipe.
fn print_line(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn emit(path: &Path, bytes: &[u8], m: &mut RunManifest) -> Result<(), Failure> {
    write_atomic(path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    m.outputs.push(path.to_path_buf());
    Ok(())
}

fn emit_with(
    path: &Path,
    m: &mut RunManifest,
    fill: impl FnOnce(&mut Vec<u8>) -> colannot::Result<()>,
) -> Result<(), Failure> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    emit(path, &buf, m)
}

fn emit_json<T: Serialize>(path: &Path, value: &T, m: &mut RunManifest) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)?;
    emit(path, text.as_bytes(), m)
}

fn record_config(cfg: &ExperimentConfig, m: &mut RunManifest) {
    m.seed = cfg.seed;
    m.config = serde_json::to_value(cfg).expect("config serializes");
}

fn table_ids(c: &Corpus) -> Vec<&str> {
    c.tables().iter().map(|t| t.id.as_str()).collect()
}

fn write_run_basics(out: &Path, cfg: &ExperimentConfig, m: &mut RunManifest) -> Result<(), Failure> {
    emit(&out.join("config.toml"), cfg.to_toml().as_bytes(), m)
}

fn write_splits(out: &Path, splits: &Splits, m: &mut RunManifest) -> Result<(), Failure> {
    let ids = serde_json::json!({
        "train": table_ids(&splits.train),
        "valid": table_ids(&splits.valid),
        "test": table_ids(&splits.test),
    });
    emit_json(&out.join("splits.json"), &ids, m)
}

fn write_reports(out: &Path, prefix: &str, reports: &[(TaskKind, EvalReport, Vec<String>)], m: &mut RunManifest) -> Result<(), Failure> {
    let summary: BTreeMap<&str, &EvalReport> = reports.iter().map(|(t, r, _)| (t.name(), r)).collect();
    emit_json(&out.join(format!("{prefix}report.json")), &summary, m)?;
    for (task, report, names) in reports {
        emit_with(&out.join(format!("{prefix}{}_per_class.csv", task.name())), m, |w| {
            report.write_csv(w, Some(names))
        })?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Output JSONL file
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Corpus kind: `context` (type and relation benchmark) or `bigram` (pretraining)
    #[arg(long, default_value = "context")]
    pub kind: String,

    /// Number of tables
    #[arg(long, default_value_t = 2000)]
    pub tables: usize,

    /// Bigram corpus: words in the successor cycle
    #[arg(long, default_value_t = 12)]
    pub cycle_len: usize,

    /// Bigram corpus: cells per column
    #[arg(long, default_value_t = 8)]
    pub cells: usize,
}

pub fn gen_data(a: &GenDataArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let seed = base_config(global)?.seed;
    m.seed = seed;
    let corpus = match a.kind.as_str() {
        "context" => {
            let spec = SyntheticSpec::context_benchmark(a.tables);
            m.config = serde_json::json!({ "kind": "context", "spec": spec });
            generate_synthetic_corpus(&spec, seed)?
        }
        "bigram" => {
            m.config = serde_json::json!({
                "kind": "bigram",
                "tables": a.tables,
                "cycle_len": a.cycle_len,
                "cells": a.cells,
            });
            generate_bigram_corpus(a.tables, a.cycle_len, a.cells, seed)?
        }
        other => return Err(Failure::Config(format!("--kind must be `context` or `bigram`, got `{other}`"))),
    };
    emit_with(out, m, |w| write_corpus(&corpus, w))
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    /// Input corpus (JSONL)
    #[arg(long)]
    pub data: PathBuf,

    /// Output vocabulary file, one token per line
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Print the table-wise token rendering of this table id to stdout
    #[arg(long)]
    pub dump_table: Option<String>,

    #[command(flatten)]
    pub arch: ArchArgs,
}

pub fn build_vocab(a: &BuildVocabArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let mut cfg = base_config(global)?;
    a.arch.apply(&mut cfg);
    let cfg = finish_config(cfg)?;
    record_config(&cfg, m);
    let corpus = load_data(&a.data, m)?;
    let vocab = build_token_vocabulary(&corpus, cfg.vocab_max_size, cfg.vocab_min_freq)?;
    if let Some(id) = &a.dump_table {
        let table = corpus
            .table(id)
            .ok_or_else(|| Failure::Config(format!("no table `{id}` in {}", a.data.display())))?;
        let seq = serialize_table(table, &cfg.serializer_config(), &vocab)?;
        print_line(&seq.render(&vocab));
    }
    let mut text = vocab.tokens().join("\n");
    text.push('\n');
    emit(out, text.as_bytes(), m)
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Input corpus (JSONL)
    #[arg(long)]
    pub data: PathBuf,

    /// Token vocabulary file; built from --data when absent
    #[arg(long)]
    pub vocab: Option<PathBuf>,

    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Pretraining epochs
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,

    /// Peak learning rate, decayed linearly to zero
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,

    /// Tables per optimizer step
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,

    /// Probability of masking each non-special token
    #[arg(long, default_value_t = 0.15)]
    pub mask_prob: f64,

    #[command(flatten)]
    pub arch: ArchArgs,
}

pub fn pretrain(a: &PretrainArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let mut cfg = base_config(global)?;
    a.arch.apply(&mut cfg);
    let cfg = finish_config(cfg)?;
    let corpus = load_data(&a.data, m)?;
    let input = match &a.vocab {
        Some(path) => {
            m.input(path);
            InputEncoding {
                vocab: TokenVocabulary::load(path).map_err(at(path))?,
                serializer: cfg.serializer_config(),
                scheme: cfg.scheme,
            }
        }
        None => cfg.input_encoding(&corpus)?,
    };
    let mlm = MlmConfig {
        mask_prob: a.mask_prob,
        epochs: a.epochs,
        optimizer: colannot::trainer::OptimizerConfig {
            lr: a.lr,
            ..cfg.optimizer()
        },
        batch_size: a.batch_size,
        seed: cfg.seed,
    };
    record_config(&cfg, m);
    m.config["mlm"] = serde_json::to_value(&mlm)?;

    let encoder = EncoderParams::init(&cfg.encoder_config(input.vocab.len()))?;
    let (encoder, curve) = pretrain_mlm(&encoder, &corpus, &mlm, &input)?;
    write_run_basics(out, &cfg, m)?;
    emit_json(&out.join("mlm.json"), &mlm, m)?;
    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in curve.iter().enumerate() {
        csv.push_str(&format!("{},{loss}\n", i + 1));
    }
    emit(&out.join("mlm_loss.csv"), csv.as_bytes(), m)?;
    let bundle = EncoderBundle { encoder, input };
    emit(&out.join("encoder.ckpt"), bundle.to_json()?.as_bytes(), m)
}

#[derive(Args, Debug)]
pub struct TrainCmdArgs {
    /// Input corpus (JSONL), split by --split unless --valid and --test are given.
    /// Without it, a context benchmark of --tables tables is generated from the seed.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Validation corpus; requires --test and disables splitting
    #[arg(long, requires = "test")]
    pub valid: Option<PathBuf>,

    /// Test corpus; requires --valid
    #[arg(long, requires = "valid")]
    pub test: Option<PathBuf>,

    /// Tables in the generated benchmark when --data is absent
    #[arg(long, default_value_t = 2000)]
    pub tables: usize,

    /// Pretrained encoder checkpoint; its architecture and vocabulary replace the arch flags
    #[arg(long)]
    pub init: Option<PathBuf>,

    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub arch: ArchArgs,

    #[command(flatten)]
    pub train: TrainArgs,
}

fn experiment_config(global: &GlobalArgs, arch: &ArchArgs, train: &TrainArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = base_config(global)?;
    arch.apply(&mut cfg);
    train.apply(&mut cfg)?;
    finish_config(cfg)
}

fn resolve_splits(
    data: Option<&Path>,
    valid: Option<&Path>,
    test: Option<&Path>,
    tables: usize,
    cfg: &ExperimentConfig,
    m: &mut RunManifest,
) -> Result<Splits, Failure> {
    let corpus = match data {
        Some(p) => load_data(p, m)?,
        None => generate_synthetic_corpus(&SyntheticSpec::context_benchmark(tables), cfg.seed)?,
    };
    match (valid, test) {
        (Some(v), Some(t)) => Ok(Splits {
            train: corpus,
            valid: load_data(v, m)?,
            test: load_data(t, m)?,
        }),
        _ => Ok(split_corpus(&corpus, cfg.fractions(), cfg.seed)?),
    }
}

fn label_names(bundle: &ModelBundle, task: TaskKind) -> Vec<String> {
    bundle.labels(colannot::pipeline::label_kind(task)).names().to_vec()
}

pub fn train(a: &TrainCmdArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let cfg = experiment_config(global, &a.arch, &a.train)?;
    record_config(&cfg, m);
    m.config["generated_tables"] = match a.data {
        Some(_) => serde_json::Value::Null,
        None => a.tables.into(),
    };
    let splits = resolve_splits(a.data.as_deref(), a.valid.as_deref(), a.test.as_deref(), a.tables, &cfg, m)?;
    let pretrained = match &a.init {
        Some(p) => {
            m.input(p);
            Some(EncoderBundle::load(p).map_err(at(p))?)
        }
        None => None,
    };
    let run = run_experiment(&splits, &cfg, pretrained.as_ref(), &mut ())?;

    write_run_basics(out, &cfg, m)?;
    write_splits(out, &splits, m)?;
    emit(&out.join("model.ckpt"), run.bundle.to_json()?.as_bytes(), m)?;
    emit_with(&out.join("history.csv"), m, |w| run.history.write_csv(w))?;
    emit_with(&out.join("timings.csv"), m, |w| run.history.write_timings_csv(w))?;
    let reports: Vec<_> = run
        .test_reports
        .iter()
        .map(|(t, r)| (*t, r.clone(), label_names(&run.bundle, *t)))
        .collect();
    write_reports(out, "test_", &reports, m)?;
    for (task, r, _) in &reports {
        log::info!("test {} micro F1 {:.4}, macro F1 {:.4}", task.name(), r.micro.f1, r.macro_avg.f1);
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Prediction dump (JSONL) from `predict`
    #[arg(long, requires = "gold", conflicts_with_all = ["model", "data"])]
    pub pred: Option<PathBuf>,

    /// Gold corpus (JSONL) for --pred
    #[arg(long, requires = "pred")]
    pub gold: Option<PathBuf>,

    /// Model checkpoint to score on --data
    #[arg(long, requires = "data")]
    pub model: Option<PathBuf>,

    /// Annotated corpus (JSONL) for --model
    #[arg(long, requires = "model")]
    pub data: Option<PathBuf>,

    /// Multi-label decision threshold for --model [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Output directory for report.json and per-class CSVs
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn has_items(c: &Corpus, task: TaskKind) -> bool {
    match task {
        TaskKind::ColumnType => !c.type_annotations().is_empty(),
        TaskKind::ColumnRelation => !c.relation_annotations().is_empty(),
    }
}

pub fn eval(a: &EvalArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let mut cfg = base_config(global)?;
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    let cfg = finish_config(cfg)?;
    record_config(&cfg, m);
    let mut reports = Vec::new();
    match (&a.pred, &a.gold, &a.model, &a.data) {
        (Some(pred), Some(gold), None, None) => {
            m.input(pred);
            let file = std::fs::File::open(pred).map_err(|e| Failure::Runtime(format!("{}: {e}", pred.display())))?;
            let records = read_predictions(BufReader::new(file), pred)?;
            let gold = load_data(gold, m)?;
            let present = records.iter().map(|r| r.task()).collect::<colannot::Result<Vec<_>>>()?;
            for task in ALL_TASKS {
                if !present.contains(&task) && !has_items(&gold, task) {
                    continue;
                }
                let names = match task {
                    TaskKind::ColumnType => gold.type_vocab().names().to_vec(),
                    TaskKind::ColumnRelation => gold.relation_vocab().names().to_vec(),
                };
                reports.push((task, evaluate_dump(&records, &gold, task)?, names));
            }
        }
        (None, None, Some(model), Some(data)) => {
            m.input(model);
            let bundle = ModelBundle::load(model).map_err(at(model))?;
            let corpus = load_data(data, m)?;
            for task in ALL_TASKS {
                if !has_items(&corpus, task) {
                    continue;
                }
                let r = evaluate_bundle(&bundle, &corpus, task, cfg.threshold)?;
                reports.push((task, r, label_names(&bundle, task)));
            }
        }
        _ => return Err(Failure::Config("eval needs either --pred and --gold, or --model and --data".into())),
    }
    if reports.is_empty() {
        return Err(Failure::Runtime("no annotated items to evaluate".into()));
    }
    let summary: BTreeMap<&str, &EvalReport> = reports.iter().map(|(t, r, _)| (t.name(), r)).collect();
    print_line(&serde_json::to_string(&summary)?);
    write_reports(out, "", &reports, m)
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model checkpoint
    #[arg(long)]
    pub model: PathBuf,

    /// Corpus to annotate (JSONL)
    #[arg(long)]
    pub data: PathBuf,

    /// Output JSONL file
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Multi-label decision threshold [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,
}

pub fn predict(a: &PredictArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let mut cfg = base_config(global)?;
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    let cfg = finish_config(cfg)?;
    record_config(&cfg, m);
    m.input(&a.model);
    let bundle = ModelBundle::load(&a.model).map_err(at(&a.model))?;
    let corpus = load_data(&a.data, m)?;
    let mut records = Vec::new();
    for task in ALL_TASKS {
        if has_items(&corpus, task) {
            records.extend(predict_corpus(&bundle, &corpus, task, cfg.threshold)?);
        }
    }
    let expected = corpus.type_annotations().len() + corpus.relation_annotations().len();
    if records.len() != expected {
        log::warn!(
            "{} of {expected} annotated items were skipped (tables wider than the column capacity)",
            expected - records.len()
        );
    }
    emit_with(out, m, |w| write_predictions(&records, w))
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Model or encoder checkpoint
    #[arg(long)]
    pub model: PathBuf,

    /// Corpus whose columns to embed (JSONL)
    #[arg(long)]
    pub data: PathBuf,

    /// Output JSONL file, one row per column
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub table: String,
    pub col: usize,
    pub gold: Vec<String>,
    pub embedding: Vec<f64>,
}

pub fn embed(a: &EmbedArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let cfg = finish_config(base_config(global)?)?;
    record_config(&cfg, m);
    m.input(&a.model);
    let encoder = EncoderBundle::load(&a.model).map_err(at(&a.model))?;
    // Embeddings only need the encoder; empty heads let a pretrained checkpoint work too.
    let model = colannot::annotator::AnnotationModel::new(
        encoder.encoder,
        0,
        0,
        LabelMode::Multiclass,
        LabelMode::Multiclass,
    );
    let corpus = load_data(&a.data, m)?;
    let mut buf = Vec::new();
    let mut skipped = 0;
    for (table, types, _) in corpus.grouped() {
        let embeddings = match extract_column_embeddings(&model, table, &encoder.input) {
            Ok(e) => e,
            Err(Error::TooManyColumns { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for (col, e) in embeddings.into_iter().enumerate() {
            let gold = types
                .iter()
                .find(|t| t.column_index == col)
                .map(|t| {
                    t.labels
                        .iter()
                        .map(|&l| corpus.type_vocab().name(l).unwrap_or("?").to_string())
                        .collect()
                })
                .unwrap_or_default();
            let row = EmbeddingRow {
                table: table.id.clone(),
                col,
                gold,
                embedding: e.to_vec(),
            };
            serde_json::to_writer(&mut buf, &row)?;
            buf.push(b'\n');
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} tables wider than the column capacity");
    }
    emit(out, &buf, m)
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Embeddings JSONL from `embed`
    #[arg(long)]
    pub embeddings: PathBuf,

    /// Number of clusters [default: number of distinct gold types]
    #[arg(long)]
    pub k: Option<usize>,

    /// Maximum k-means assignment steps
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,

    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cluster(a: &ClusterArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let seed = base_config(global)?.seed;
    m.seed = seed;
    m.input(&a.embeddings);
    let text = std::fs::read_to_string(&a.embeddings)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", a.embeddings.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow = serde_json::from_str(line)
            .map_err(|e| Failure::Runtime(format!("{}:{}: {e}", a.embeddings.display(), i + 1)))?;
        rows.push(row);
    }
    let gold_key = |r: &EmbeddingRow| r.gold.join("|");
    let classes: BTreeSet<String> = rows.iter().filter(|r| !r.gold.is_empty()).map(gold_key).collect();
    let k = match a.k {
        Some(k) => k,
        None if !classes.is_empty() => classes.len(),
        None => return Err(Failure::Config("no gold types in the embeddings; pass --k".into())),
    };
    m.config = serde_json::json!({ "k": k, "max_iters": a.max_iters, "seed": seed });
    let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.embedding.clone()).collect();
    let result = kmeans(&vectors, k, seed, a.max_iters)?;

    let mut csv = String::from("table,col,cluster,gold\n");
    for (r, c) in rows.iter().zip(&result.assignments) {
        csv.push_str(&format!("{},{},{c},{}\n", csv_field(&r.table), r.col, csv_field(&gold_key(r))));
    }
    emit(&out.join("assignments.csv"), csv.as_bytes(), m)?;

    let (pred, gold): (Vec<usize>, Vec<String>) = rows
        .iter()
        .zip(&result.assignments)
        .filter(|(r, _)| !r.gold.is_empty())
        .map(|(r, &c)| (c, gold_key(r)))
        .unzip();
    let scores = if pred.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::to_value(clustering_scores(&pred, &gold)?)?
    };
    let report = serde_json::json!({
        "k": k,
        "columns": rows.len(),
        "scored_columns": pred.len(),
        "scores": scores,
        "inertia_history": result.inertia_history,
    });
    emit_json(&out.join("report.json"), &report, m)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Model checkpoint with a type head
    #[arg(long)]
    pub model: PathBuf,

    /// Type-annotated corpus (JSONL)
    #[arg(long)]
    pub data: PathBuf,

    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn analyze_attention(a: &AnalyzeArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let cfg = finish_config(base_config(global)?)?;
    record_config(&cfg, m);
    m.input(&a.model);
    let bundle = ModelBundle::load(&a.model).map_err(at(&a.model))?;
    let corpus = load_data(&a.data, m)?;
    let matrix = column_dependency_matrix(&bundle, &corpus)?;
    emit_with(&out.join("dependency.csv"), m, |w| matrix.write_csv(w))?;
    emit_with(&out.join("dependency_counts.csv"), m, |w| matrix.write_counts_csv(w))?;
    emit_json(&out.join("dependency.json"), &matrix, m)
}

#[derive(Args, Debug)]
pub struct SweepCommon {
    /// Corpus to split (JSONL); without it, a context benchmark of --tables tables is generated
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Tables in the generated benchmark when --data is absent
    #[arg(long, default_value_t = 2000)]
    pub tables: usize,

    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub arch: ArchArgs,

    #[command(flatten)]
    pub train: TrainArgs,
}

impl SweepCommon {
    fn prepare(&self, global: &GlobalArgs, m: &mut RunManifest) -> Result<(ExperimentConfig, Splits), Failure> {
        let cfg = experiment_config(global, &self.arch, &self.train)?;
        record_config(&cfg, m);
        let splits = resolve_splits(self.data.as_deref(), None, None, self.tables, &cfg, m)?;
        Ok((cfg, splits))
    }

    fn finish(&self, out: &Path, cfg: &ExperimentConfig, report: &SweepReport, m: &mut RunManifest) -> Result<(), Failure> {
        write_run_basics(out, cfg, m)?;
        emit_with(&out.join("sweep.csv"), m, |w| report.write_csv(w))?;
        emit_json(&out.join("sweep.json"), report, m)
    }
}

#[derive(Args, Debug)]
pub struct SweepBudgetArgs {
    /// Comma-separated per-column token budgets
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    pub budgets: Vec<usize>,

    #[command(flatten)]
    pub sweep: SweepCommon,
}

pub fn sweep_budget(a: &SweepBudgetArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let (cfg, splits) = a.sweep.prepare(global, m)?;
    m.config["budgets"] = serde_json::to_value(&a.budgets)?;
    let report = token_budget_sweep(&splits, &cfg, &a.budgets)?;
    a.sweep.finish(out, &cfg, &report, m)
}

#[derive(Args, Debug)]
pub struct SweepFractionArgs {
    /// Comma-separated fractions of the training split, each in (0, 1]
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1.0")]
    pub fractions: Vec<f64>,

    #[command(flatten)]
    pub sweep: SweepCommon,
}

pub fn sweep_fraction(a: &SweepFractionArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let (cfg, splits) = a.sweep.prepare(global, m)?;
    m.config["fractions"] = serde_json::to_value(&a.fractions)?;
    let report = learning_curve(&splits, &cfg, &a.fractions, cfg.seed)?;
    let subsets = nested_subsets(&splits.train, &a.fractions, cfg.seed)?;
    let listing: Vec<serde_json::Value> = a
        .fractions
        .iter()
        .zip(&subsets)
        .map(|(f, s)| serde_json::json!({ "fraction": f, "tables": table_ids(s) }))
        .collect();
    emit_json(&out.join("subsets.json"), &listing, m)?;
    a.sweep.finish(out, &cfg, &report, m)
}

#[derive(Args, Debug)]
pub struct ShuffleArgs {
    /// What to shuffle within each table: `rows` or `columns`
    #[arg(long, default_value = "columns")]
    pub mode: String,

    #[command(flatten)]
    pub sweep: SweepCommon,
}

pub fn shuffle_test(a: &ShuffleArgs, global: &GlobalArgs, out: &Path, m: &mut RunManifest) -> Result<(), Failure> {
    let mode: ShuffleMode = a.mode.parse().map_err(|e: Error| Failure::Config(format!("--mode: {e}")))?;
    let (cfg, splits) = a.sweep.prepare(global, m)?;
    m.config["mode"] = a.mode.clone().into();
    let report = shuffle_robustness(&splits, &cfg, mode, cfg.seed)?;
    a.sweep.finish(out, &cfg, &report, m)
}
