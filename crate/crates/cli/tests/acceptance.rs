//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Criteria 5, 6, 7, and 11 share one training run on the synthetic context
//! benchmark; criterion 10 trains its own pretrained and random-init models.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use colannot::analysis::{column_dependency_matrix, shuffle_corpus, ShuffleMode, SWEEP_COLUMNS};
use colannot::annotator::{accumulate_task_gradients, AnnotationModel, DenseHead, TaskGradients, TaskKind};
use colannot::checkpoint::{EncoderBundle, ModelBundle};
use colannot::corpus::{
    generate_bigram_corpus, generate_synthetic_corpus, generate_with_roles, save_corpus, split_corpus,
    Column, ColumnRole, Corpus, LabelKind, LabelMode, LabelVocabulary, Splits, SyntheticSpec, Table,
};
use colannot::encoder::{attention_maps, EncoderConfig, EncoderParams, Parameters};
use colannot::metrics::{clustering_scores, evaluate, perplexity, MaskedScorer};
use colannot::pipeline::{label_ids, predict_corpus, run_experiment, ExperimentConfig};
use colannot::serializer::{serialize_single_column, serialize_table, EncodedSequence, SequenceSource, SerializerConfig};
use colannot::tokenizer::{build_token_vocabulary, TokenId, CLS, PAD, SEP};
use colannot::trainer::{build_sequences, pretrain_mlm, InputScheme, MlmConfig, TaskOptimizer, TrainObserver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Settings for the context benchmark: the required (L=2, H=4, d=64) encoder.
fn benchmark_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        epochs: 12,
        lr: 1e-3,
        batch_size: 16,
        num_layers: 2,
        num_heads: 4,
        d_model: 64,
        d_ff: 128,
        max_seq_len: 32,
        dropout: 0.1,
        max_tokens_per_column: 5,
        seed,
        ..ExperimentConfig::default()
    }
}

const BENCHMARK_TABLES: usize = 2000;
const CONTEXT_THRESHOLD: f64 = 0.95;
const SINGLE_COLUMN_CEILING: f64 = 0.60;

struct Benchmark {
    spec: SyntheticSpec,
    splits: Splits,
    ambiguous: HashMap<String, Vec<bool>>,
}

fn benchmark(seed: u64) -> Result<Benchmark, String> {
    let spec = SyntheticSpec::context_benchmark(BENCHMARK_TABLES);
    let generated = generate_with_roles(&spec, seed).map_err(err)?;
    let ambiguous = generated
        .corpus
        .tables()
        .iter()
        .zip(&generated.roles)
        .map(|(t, roles)| {
            (
                t.id.clone(),
                roles.iter().map(|r| matches!(r, ColumnRole::Ambiguous(_))).collect(),
            )
        })
        .collect();
    let splits = split_corpus(&generated.corpus, (0.8, 0.1, 0.1), seed).map_err(err)?;
    Ok(Benchmark {
        spec,
        splits,
        ambiguous,
    })
}

/// Type micro F1 restricted to ambiguous columns of the test split.
fn ambiguous_f1(bundle: &ModelBundle, bench: &Benchmark, threshold: f64) -> Result<(f64, usize), String> {
    let records = predict_corpus(bundle, &bench.splits.test, TaskKind::ColumnType, threshold).map_err(err)?;
    let selected: Vec<_> = records
        .into_iter()
        .filter(|r| bench.ambiguous[&r.table][r.col.expect("type record")])
        .collect();
    ensure(!selected.is_empty(), "no ambiguous columns in the test split")?;
    let (p, g) = label_ids(&selected, &bundle.type_labels).map_err(err)?;
    Ok((evaluate(&p, &g).map_err(err)?.micro.f1, selected.len()))
}

fn jitter(p: &mut dyn Parameters, r: &mut ChaCha8Rng) {
    for (_, t) in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
    }
}

fn criterion_1() -> Check {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::context_benchmark(6), 3).map_err(err)?;
    let cfg = ExperimentConfig {
        num_layers: 1,
        num_heads: 2,
        d_model: 8,
        d_ff: 16,
        max_seq_len: 32,
        max_tokens_per_column: 3,
        dropout: 0.0,
        seed: 5,
        ..ExperimentConfig::default()
    };
    let input = cfg.input_encoding(&corpus).map_err(err)?;
    let mut model = AnnotationModel::new(
        EncoderParams::init(&cfg.encoder_config(input.vocab.len())).map_err(err)?,
        corpus.type_vocab().len(),
        corpus.relation_vocab().len(),
        LabelMode::Multiclass,
        LabelMode::Multilabel,
    );
    // Spread the weights so every parameter sees a gradient well above rounding.
    let mut r = ChaCha8Rng::seed_from_u64(9);
    jitter(&mut model.encoder, &mut r);
    jitter(&mut model.type_head, &mut r);
    jitter(&mut model.relation_head, &mut r);

    let tasks = [TaskKind::ColumnType, TaskKind::ColumnRelation];
    let mut data = Vec::new();
    for task in tasks {
        let (seqs, dropped) = build_sequences(&corpus, task, &input).map_err(err)?;
        ensure(dropped == 0 && !seqs.is_empty(), "fixture sequences missing")?;
        data.push((task, seqs));
    }
    let loss_and_grads = |m: &AnnotationModel| -> Result<(f64, Vec<TaskGradients>), String> {
        let mut total = 0.0;
        let mut all = Vec::new();
        for (task, seqs) in &data {
            let mut g = TaskGradients::zeros_for(m, *task);
            for s in seqs {
                total += accumulate_task_gradients(m, *task, &s.seq.ids, &s.targets, 1.0, None, &mut g).map_err(err)?;
            }
            all.push(g);
        }
        Ok((total, all))
    };
    let (_, grads) = loss_and_grads(&model)?;

    // Analytic gradient of the combined loss: encoder gradients add across tasks.
    let mut encoder_grad = grads[0].encoder.clone();
    for ((_, dst), src) in encoder_grad.tensors_mut().into_iter().zip(grads[1].encoder.tensors()) {
        dst.iter_mut().zip(src.data).for_each(|(d, s)| *d += s);
    }
    // Key biases have an exactly zero gradient (softmax is shift invariant per row),
    // which backprop reports as rounding noise around 1e-18; those are not sampled.
    let mut candidates = Vec::new();
    let groups: [Vec<Vec<f64>>; 3] = [
        encoder_grad.tensors().iter().map(|t| t.data.to_vec()).collect(),
        grads[0].head.tensors().iter().map(|t| t.data.to_vec()).collect(),
        grads[1].head.tensors().iter().map(|t| t.data.to_vec()).collect(),
    ];
    for (gi, tensors) in groups.iter().enumerate() {
        for (ti, t) in tensors.iter().enumerate() {
            for (ei, &g) in t.iter().enumerate() {
                if g.abs() > 1e-10 {
                    candidates.push((gi, ti, ei, g));
                }
            }
        }
    }
    let total_params =
        model.encoder.num_parameters() + model.type_head.num_parameters() + model.relation_head.num_parameters();
    let samples = 250.min(candidates.len());
    ensure(samples >= 200, format!("only {} parameters with nonzero gradient", candidates.len()))?;
    let mut pick = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    let h = 1e-4;
    let started = Instant::now();
    for _ in 0..samples {
        let idx = pick.random_range(0..candidates.len());
        let (gi, ti, ei, analytic) = candidates.swap_remove(idx);
        let eval = |delta: f64| -> Result<f64, String> {
            let mut m = model.clone();
            let bump = |p: &mut dyn Parameters| p.tensors_mut()[ti].1[ei] += delta;
            match gi {
                0 => bump(&mut m.encoder),
                1 => bump(&mut m.type_head),
                _ => bump(&mut m.relation_head),
            }
            Ok(loss_and_grads(&m)?.0)
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        worst = worst.max(rel);
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.1}s"))?;
    ensure(worst <= 1e-3, format!("max relative error {worst:.3e} > 1e-3"))?;
    Ok(format!(
        "max relative error {worst:.2e} over {samples} of {total_params} parameters ({secs:.1}s)"
    ))
}

fn criterion_2() -> Check {
    let cfg = EncoderConfig {
        num_layers: 2,
        num_heads: 4,
        d_model: 16,
        d_ff: 32,
        max_seq_len: 40,
        vocab_size: 30,
        dropout_rate: 0.1,
        seed: 2,
    };
    let mut params = EncoderParams::init(&cfg).map_err(err)?;
    let mut r = ChaCha8Rng::seed_from_u64(21);
    for (_, t) in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    }
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for _ in 0..100 {
        let real = r.random_range(1..=30);
        let pad = r.random_range(0..=10);
        let mut ids: Vec<TokenId> = (0..real).map(|_| r.random_range(1..30)).collect();
        ids.extend(std::iter::repeat_n(PAD, pad));
        let seq = EncodedSequence {
            ids: ids.clone(),
            cls_positions: vec![],
            column_spans: vec![],
            source: SequenceSource::default(),
        };
        for layer in attention_maps(&params, &seq).map_err(err)? {
            for head in layer {
                for row in head.rows() {
                    let live: f64 = row.iter().zip(&ids).filter(|(_, &id)| id != PAD).map(|(w, _)| w).sum();
                    let on_pad: f64 = row.iter().zip(&ids).filter(|(_, &id)| id == PAD).map(|(w, _)| w).sum();
                    worst = worst.max((live - 1.0).abs()).max(on_pad.abs());
                    rows += 1;
                }
            }
        }
    }
    ensure(worst <= 1e-6, format!("row sum off by {worst:.2e}"))?;
    Ok(format!("{rows} rows over 100 padded sequences, max deviation {worst:.1e}"))
}

fn criterion_3() -> Check {
    let expected = [(8, 56), (16, 30), (32, 15)];
    let mut got = Vec::new();
    for (budget, cols) in expected {
        let cfg = SerializerConfig {
            max_tokens_per_column: budget,
            max_seq_len: 512,
            include_metadata: false,
        };
        let n = cfg.max_columns();
        ensure(n == cols, format!("max_columns({budget}) = {n}, expected {cols}"))?;
        got.push(format!("{budget}->{n}"));
    }
    Ok(got.join(", "))
}

fn figure_table() -> Table {
    Table::new(
        "animation",
        vec![
            Column::new(["Happy Feet", "Cars", "Flushed Away"]),
            Column::new(["George Miller", "John Lasseter", "David Bowers"]),
            Column::new(["George Miller", "Darla K. Anderson", "Cecil Kramer"]),
            Column::new(["USA", "UK", "France"]),
        ],
        None,
    )
    .expect("valid fixture")
}

fn criterion_4() -> Check {
    let table = figure_table();
    let corpus = Corpus::new(
        vec![table.clone()],
        vec![],
        vec![],
        LabelVocabulary::empty(LabelKind::Type),
        LabelVocabulary::empty(LabelKind::Relation),
    ).map_err(err)?;
    let vocab = build_token_vocabulary(&corpus, 1000, 1).map_err(err)?;
    let cfg = SerializerConfig {
        max_tokens_per_column: 32,
        max_seq_len: 512,
        include_metadata: false,
    };
    // The tokenizer lowercases, so the printed examples are compared lowercased.
    let single = serialize_single_column(&table.columns[0], &cfg, &vocab).map_err(err)?.render(&vocab);
    let want_single = format!("[CLS] {} [SEP]", "Happy Feet Cars Flushed Away".to_lowercase());
    ensure(single == want_single, format!("single column: `{single}`"))?;

    let whole = serialize_table(&table, &cfg, &vocab).map_err(err)?;
    let text = whole.render(&vocab);
    let want = "[CLS] happy feet cars flushed away [CLS] george miller john lasseter david bowers \
                [CLS] george miller darla k . anderson cecil kramer [CLS] usa uk france [SEP]";
    ensure(text == want, format!("table: `{text}`"))?;
    ensure(
        text.starts_with("[CLS] happy feet") && text.ends_with("[CLS] usa uk france [SEP]"),
        "elided worked-example form not matched",
    )?;
    ensure(whole.cls_positions.len() == 4 && whole.ids.iter().filter(|&&t| t == SEP).count() == 1, "markers")?;
    ensure(whole.ids[0] == CLS, "leading marker")?;
    Ok(format!("`{single}`; table-wise form with 4 [CLS] and 1 [SEP]"))
}

/// Parameters of the other head and the other optimizers, captured at phase start.
struct Snapshot {
    task: TaskKind,
    other_heads: Vec<(TaskKind, DenseHead)>,
    other_optimizers: Vec<TaskOptimizer>,
}

#[derive(Default)]
struct Instrument {
    open: Option<Snapshot>,
    phases: Vec<(usize, TaskKind)>,
    violations: Vec<String>,
    steps_seen: BTreeMap<&'static str, usize>,
}

impl TrainObserver for Instrument {
    fn phase_started(&mut self, epoch: usize, task: TaskKind, model: &AnnotationModel, optimizers: &[TaskOptimizer]) {
        self.phases.push((epoch, task));
        let others = [TaskKind::ColumnType, TaskKind::ColumnRelation]
            .into_iter()
            .filter(|t| *t != task)
            .map(|t| (t, model.head(t).clone()))
            .collect();
        self.open = Some(Snapshot {
            task,
            other_heads: others,
            other_optimizers: optimizers.iter().filter(|o| o.task != task).cloned().collect(),
        });
    }

    fn phase_finished(&mut self, epoch: usize, task: TaskKind, model: &AnnotationModel, optimizers: &[TaskOptimizer]) {
        let Some(snap) = self.open.take() else {
            self.violations.push(format!("epoch {epoch}: phase finished without start"));
            return;
        };
        if snap.task != task {
            self.violations.push(format!("epoch {epoch}: phase mismatch"));
        }
        for (t, head) in &snap.other_heads {
            let now = model.head(*t);
            let same = head.tensors().iter().zip(now.tensors()).all(|(a, b)| {
                a.data.iter().zip(b.data).all(|(x, y)| x.to_bits() == y.to_bits())
            });
            if !same {
                self.violations.push(format!("epoch {epoch}: {} head changed during {} phase", t.name(), task.name()));
            }
        }
        for before in &snap.other_optimizers {
            match optimizers.iter().find(|o| o.task == before.task) {
                Some(after) if after == before => {}
                _ => self.violations.push(format!(
                    "epoch {epoch}: {} optimizer state changed during {} phase",
                    before.task.name(),
                    task.name()
                )),
            }
        }
        if let Some(own) = optimizers.iter().find(|o| o.task == task) {
            self.steps_seen.insert(task.name(), own.steps_taken);
        }
    }
}

struct ContextRun {
    bench: Benchmark,
    cfg: ExperimentConfig,
    bundle: ModelBundle,
    table_f1: f64,
    ambiguous_items: usize,
    relation_f1: f64,
    single_f1: f64,
    history_phases: Vec<(usize, TaskKind)>,
    instrument: Instrument,
    minutes: f64,
}

fn context_run() -> Result<ContextRun, String> {
    let started = Instant::now();
    let bench = benchmark(1)?;
    let cfg = benchmark_config(1);
    let mut instrument = Instrument::default();
    let run = run_experiment(&bench.splits, &cfg, None, &mut instrument).map_err(err)?;
    let (table_f1, ambiguous_items) = ambiguous_f1(&run.bundle, &bench, cfg.threshold)?;
    let relation_f1 = run
        .report(TaskKind::ColumnRelation)
        .ok_or("no relation test report")?
        .micro
        .f1;

    let single_cfg = ExperimentConfig {
        scheme: InputScheme::SingleColumn,
        tasks: vec![TaskKind::ColumnType],
        ..cfg.clone()
    };
    let single = run_experiment(&bench.splits, &single_cfg, None, &mut ()).map_err(err)?;
    let (single_f1, _) = ambiguous_f1(&single.bundle, &bench, cfg.threshold)?;
    Ok(ContextRun {
        history_phases: run.history.records.iter().map(|r| (r.epoch, r.task)).collect(),
        bench,
        cfg,
        bundle: run.bundle,
        table_f1,
        ambiguous_items,
        relation_f1,
        single_f1,
        instrument,
        minutes: started.elapsed().as_secs_f64() / 60.0,
    })
}

fn criterion_5(run: &ContextRun) -> Check {
    let bayes = run.bench.spec.bayes_single_column_accuracy();
    ensure((bayes - 0.5).abs() < 1e-12, format!("Bayes single-column accuracy {bayes}"))?;
    ensure(run.minutes <= 15.0, format!("training took {:.1} min", run.minutes))?;
    ensure(
        run.table_f1 >= CONTEXT_THRESHOLD,
        format!("table-wise ambiguous F1 {:.4} < {CONTEXT_THRESHOLD}", run.table_f1),
    )?;
    ensure(
        run.single_f1 <= SINGLE_COLUMN_CEILING,
        format!("single-column ambiguous F1 {:.4} > {SINGLE_COLUMN_CEILING}", run.single_f1),
    )?;
    Ok(format!(
        "ambiguous-column micro F1: table-wise {:.4}, single-column {:.4} (Bayes 0.5, {} items, {:.1} min)",
        run.table_f1, run.single_f1, run.ambiguous_items, run.minutes
    ))
}

fn criterion_6(run: &ContextRun) -> Check {
    ensure(
        run.relation_f1 >= CONTEXT_THRESHOLD,
        format!("relation micro F1 {:.4}", run.relation_f1),
    )?;
    Ok(format!("table-wise relation micro F1 {:.4}", run.relation_f1))
}

fn criterion_7(run: &ContextRun) -> Check {
    let order = &run.cfg.tasks;
    let expected: Vec<(usize, TaskKind)> = (1..=run.cfg.epochs)
        .flat_map(|e| order.iter().map(move |&t| (e, t)))
        .collect();
    ensure(run.history_phases == expected, "history records out of order or miscounted")?;
    ensure(run.instrument.phases == expected, "observed phases out of order")?;
    ensure(run.instrument.violations.is_empty(), run.instrument.violations.join("; "))?;
    let steps: Vec<String> = run.instrument.steps_seen.iter().map(|(t, s)| format!("{t} {s}")).collect();
    Ok(format!(
        "{} records ({} epochs x {} tasks); off-phase heads and optimizer states bit-identical; steps: {}",
        expected.len(),
        run.cfg.epochs,
        order.len(),
        steps.join(", ")
    ))
}

fn criterion_8() -> Check {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    // golds [{A},{B},{A}], preds [{A},{A},{A}]
    let r = evaluate(&[vec![0], vec![0], vec![0]], &[vec![0], vec![1], vec![0]]).map_err(err)?;
    ensure(close(r.micro.f1, 2.0 / 3.0), format!("micro {}", r.micro.f1))?;
    ensure(close(r.macro_avg.f1, 0.4), format!("macro {}", r.macro_avg.f1))?;
    let r = evaluate(&[vec![0]], &[vec![0, 1]]).map_err(err)?;
    ensure(
        close(r.micro.precision, 1.0) && close(r.micro.recall, 0.5) && close(r.micro.f1, 2.0 / 3.0),
        "multilabel fixture",
    )?;

    // pred [0,0,1,1], gold [a,a,a,b]
    let c = clustering_scores(&[0, 0, 1, 1], &["a", "a", "a", "b"]).map_err(err)?;
    let ln = f64::ln;
    let h_gold = -(0.75 * ln(0.75) + 0.25 * ln(0.25));
    let h_pred = ln(2.0);
    let h_gold_given_pred = -(0.5 * ln(1.0) + 0.25 * ln(0.5) + 0.25 * ln(0.5));
    let h_pred_given_gold = -(0.5 * ln(2.0 / 3.0) + 0.25 * ln(1.0 / 3.0) + 0.25 * ln(1.0));
    let h = 1.0 - h_gold_given_pred / h_gold;
    let cm = 1.0 - h_pred_given_gold / h_pred;
    let v = 2.0 * h * cm / (h + cm);
    ensure(
        close(c.homogeneity, h) && close(c.completeness, cm) && close(c.v_measure, v),
        format!("clustering {c:?} vs ({h}, {cm}, {v})"),
    )?;

    let mut r = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1000 {
        let n = r.random_range(1..50);
        let k = r.random_range(1..6);
        let preds: Vec<Vec<usize>> = (0..n).map(|_| vec![r.random_range(0..k)]).collect();
        let golds: Vec<Vec<usize>> = (0..n).map(|_| vec![r.random_range(0..k)]).collect();
        let acc = preds.iter().zip(&golds).filter(|(p, g)| p == g).count() as f64 / n as f64;
        let f1 = evaluate(&preds, &golds).map_err(err)?.micro.f1;
        ensure(close(f1, acc), format!("fixture {i}: micro F1 {f1} vs accuracy {acc}"))?;
    }
    Ok(format!("goldens within 1e-9 (v-measure {v:.6}); micro F1 == accuracy on 1000 fixtures"))
}

struct Fixed;

impl MaskedScorer for Fixed {
    fn masked_probability(&self, _: &[TokenId], position: usize, _: TokenId) -> colannot::Result<f64> {
        Ok(if position == 1 { 0.5 } else { 0.25 })
    }
}

fn criterion_9() -> Check {
    let vocab_size = 23;
    let cfg = EncoderConfig {
        num_layers: 1,
        num_heads: 2,
        d_model: 8,
        d_ff: 16,
        max_seq_len: 16,
        vocab_size,
        dropout_rate: 0.0,
        seed: 4,
    };
    let mut params = EncoderParams::init(&cfg).map_err(err)?;
    params.mlm_weight.fill(0.0);
    params.mlm_bias.fill(0.0);
    let seq = |ids: Vec<TokenId>| EncodedSequence {
        ids,
        cls_positions: vec![0],
        column_spans: vec![],
        source: SequenceSource::default(),
    };
    let uniform = perplexity(&params, &seq(vec![CLS, 7, 12, 9, 20, SEP])).map_err(err)?;
    ensure((uniform - vocab_size as f64).abs() <= 1e-9, format!("uniform PPL {uniform}"))?;
    let two = perplexity(&Fixed, &seq(vec![CLS, 5, 6, SEP])).map_err(err)?;
    ensure((two - 2.0 * 2f64.sqrt()).abs() <= 1e-9, format!("closed form PPL {two}"))?;
    Ok(format!("uniform PPL {uniform:.12} (|V| = {vocab_size}); closed form {two:.12}"))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    xs[xs.len() / 2]
}

fn epochs_to_threshold(history: &colannot::trainer::TrainHistory, threshold: f64) -> Option<usize> {
    let mut by_epoch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in &history.records {
        by_epoch.entry(r.epoch).or_default().push(r.val_f1);
    }
    by_epoch
        .into_iter()
        .find(|(_, fs)| fs.iter().all(|&f| f >= threshold))
        .map(|(e, _)| e)
}

fn criterion_10() -> Check {
    // Masked-token pretraining on the deterministic-bigram corpus.
    let bigram = generate_bigram_corpus(1000, 12, 8, 3).map_err(err)?;
    let cfg = ExperimentConfig {
        num_layers: 2,
        num_heads: 4,
        d_model: 32,
        d_ff: 64,
        max_seq_len: 16,
        max_tokens_per_column: 8,
        dropout: 0.0,
        seed: 3,
        ..ExperimentConfig::default()
    };
    let input = cfg.input_encoding(&bigram).map_err(err)?;
    let vocab = input.vocab.len();
    let mlm = MlmConfig {
        epochs: 20,
        optimizer: colannot::trainer::OptimizerConfig {
            lr: 3e-3,
            ..cfg.optimizer()
        },
        seed: 3,
        ..MlmConfig::default()
    };
    let encoder = EncoderParams::init(&cfg.encoder_config(vocab)).map_err(err)?;
    let (_, curve) = pretrain_mlm(&encoder, &bigram, &mlm, &input).map_err(err)?;
    let final_ce = *curve.last().ok_or("empty curve")?;
    let bound = 0.2 * (vocab as f64).ln();
    ensure(final_ce < bound, format!("final masked CE {final_ce:.4} >= 0.2 ln|V| = {bound:.4}"))?;

    // Pretrained versus random-init fine-tuning on the context benchmark, 3 seeds.
    let mut pretrained_epochs = Vec::new();
    let mut random_epochs = Vec::new();
    let mut pretrained_f1 = Vec::new();
    let never = f64::INFINITY;
    for seed in [11, 12, 13] {
        let bench = benchmark(seed)?;
        let cfg = benchmark_config(seed);
        let input = cfg.input_encoding(&bench.splits.train).map_err(err)?;
        let init = EncoderParams::init(&cfg.encoder_config(input.vocab.len())).map_err(err)?;
        let pre_cfg = MlmConfig {
            epochs: 5,
            optimizer: colannot::trainer::OptimizerConfig {
                lr: 1e-3,
                ..cfg.optimizer()
            },
            seed,
            ..MlmConfig::default()
        };
        let (encoder, _) = pretrain_mlm(&init, &bench.splits.train, &pre_cfg, &input).map_err(err)?;
        let pre = EncoderBundle { encoder, input };
        let tuned = run_experiment(&bench.splits, &cfg, Some(&pre), &mut ()).map_err(err)?;
        let scratch = run_experiment(&bench.splits, &cfg, None, &mut ()).map_err(err)?;
        pretrained_epochs.push(epochs_to_threshold(&tuned.history, CONTEXT_THRESHOLD).map_or(never, |e| e as f64));
        random_epochs.push(epochs_to_threshold(&scratch.history, CONTEXT_THRESHOLD).map_or(never, |e| e as f64));
        pretrained_f1.push(ambiguous_f1(&tuned.bundle, &bench, cfg.threshold)?.0);
    }
    let (pm, rm) = (median(pretrained_epochs.clone()), median(random_epochs.clone()));
    let halved = pm <= rm / 2.0;
    let worst_f1 = pretrained_f1.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(
        worst_f1 >= CONTEXT_THRESHOLD,
        format!("pretrained model ambiguous F1 {worst_f1:.4} < {CONTEXT_THRESHOLD}"),
    )?;
    Ok(format!(
        "bigram masked CE {final_ce:.4} < {bound:.4}; epochs to {CONTEXT_THRESHOLD} val F1 \
         pretrained {pretrained_epochs:?} vs random {random_epochs:?} (median {pm} vs {rm}, \
         halved: {halved}, report-only); pretrained ambiguous F1 min {worst_f1:.4}"
    ))
}

fn criterion_11(run: &ContextRun) -> Check {
    let m = column_dependency_matrix(&run.bundle, &run.bench.splits.test).map_err(err)?;
    let mut weighted = 0.0;
    let mut total = 0usize;
    for (row, counts) in m.values.iter().zip(&m.counts) {
        for (v, &c) in row.iter().zip(counts) {
            if let Some(v) = v {
                weighted += v * c as f64;
                total += c;
            }
        }
    }
    let mean = weighted / total as f64;
    ensure(mean.abs() <= 1e-6, format!("count-weighted mean {mean:.3e}"))?;
    let mut gap: f64 = 0.0;
    let mut pair = (0, 0);
    for a in 0..m.labels.len() {
        for b in 0..m.labels.len() {
            if let (Some(x), Some(y)) = (m.values[a][b], m.values[b][a]) {
                if (x - y).abs() > gap {
                    gap = (x - y).abs();
                    pair = (a, b);
                }
            }
        }
    }
    ensure(gap > 0.0, "matrix is symmetric")?;
    Ok(format!(
        "weighted mean {mean:.1e}; |M[{0}][{1}] - M[{1}][{0}]| = {gap:.3e}",
        m.labels[pair.0], m.labels[pair.1]
    ))
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_colannot"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(err)?;
    ensure(
        out.status.success(),
        format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()),
    )
}

const CLI_MODEL: &[&str] = &[
    "--epochs", "3", "--lr", "1e-3", "--max-seq-len", "32", "--budget", "5", "--d-model", "32",
    "--num-heads", "4", "--d-ff", "64",
];

fn criterion_12() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let corpus = generate_synthetic_corpus(&SyntheticSpec::context_benchmark(300), 5).map_err(err)?;
    save_corpus(&corpus, dir.path().join("d.jsonl")).map_err(err)?;
    for run in ["a", "b"] {
        let mut args = vec!["--seed", "7", "train", "--data", "d.jsonl", "--out", run];
        args.extend_from_slice(CLI_MODEL);
        cli(dir.path(), &args)?;
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).map_err(err);
    let (ha, hb) = (read("a/history.csv")?, read("b/history.csv")?);
    ensure(ha == hb, "history.csv differs")?;
    let a = ModelBundle::load(dir.path().join("a/model.ckpt")).map_err(err)?;
    let b = ModelBundle::load(dir.path().join("b/model.ckpt")).map_err(err)?;
    let tensors = |m: &ModelBundle| -> Vec<Vec<u64>> {
        let mut out: Vec<Vec<u64>> = Vec::new();
        for t in m.model.encoder.tensors().into_iter().chain(m.model.type_head.tensors()).chain(m.model.relation_head.tensors()) {
            out.push(t.data.iter().map(|v| v.to_bits()).collect());
        }
        out
    };
    let (ta, tb) = (tensors(&a), tensors(&b));
    ensure(ta == tb, "checkpoint tensors differ")?;
    let count: usize = ta.iter().map(Vec::len).sum();
    Ok(format!(
        "history.csv byte-identical ({} bytes); {count} checkpoint values bit-identical",
        ha.len()
    ))
}

fn check_sweep_csv(path: &Path, sweep: &str) -> Result<Vec<Vec<String>>, String> {
    let text = std::fs::read_to_string(path).map_err(err)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty CSV")?.split(',').collect();
    ensure(header == SWEEP_COLUMNS, format!("{sweep}: header {header:?}"))?;
    let mut rows = Vec::new();
    for line in lines {
        let f: Vec<String> = line.split(',').map(String::from).collect();
        ensure(f.len() == SWEEP_COLUMNS.len(), format!("{sweep}: row `{line}`"))?;
        ensure(f[0] == sweep, format!("{sweep}: sweep column `{}`", f[0]))?;
        ensure(f[3] == "type" || f[3] == "relation", format!("{sweep}: task `{}`", f[3]))?;
        for i in [4, 5] {
            let v: f64 = f[i].parse().map_err(|_| format!("{sweep}: `{}` is not a number", f[i]))?;
            ensure((0.0..=1.0).contains(&v), format!("{sweep}: F1 {v} outside [0, 1]"))?;
        }
        for i in [6, 7] {
            f[i].parse::<usize>().map_err(|_| format!("{sweep}: `{}` is not a count", f[i]))?;
        }
        let s: f64 = f[8].parse().map_err(|_| format!("{sweep}: bad seconds"))?;
        ensure(s >= 0.0, "negative seconds")?;
        rows.push(f);
    }
    ensure(!rows.is_empty(), format!("{sweep}: no rows"))?;
    Ok(rows)
}

fn criterion_13() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let corpus = generate_synthetic_corpus(&SyntheticSpec::context_benchmark(200), 6).map_err(err)?;
    save_corpus(&corpus, dir.path().join("d.jsonl")).map_err(err)?;
    fn with_model(mut args: Vec<&str>) -> Vec<&str> {
        args.extend_from_slice(&CLI_MODEL[2..]);
        args.extend_from_slice(&["--epochs", "1"]);
        args
    }
    cli(dir.path(), &with_model(vec!["sweep-budget", "--data", "d.jsonl", "--budgets", "2,5", "--out", "b"]))?;
    cli(dir.path(), &with_model(vec!["sweep-fraction", "--data", "d.jsonl", "--fractions", "0.25,0.5,1", "--out", "f"]))?;
    cli(dir.path(), &with_model(vec!["shuffle-test", "--data", "d.jsonl", "--mode", "columns", "--out", "s"]))?;

    let budget = check_sweep_csv(&dir.path().join("b/sweep.csv"), "budget")?;
    let settings: Vec<&str> = budget.iter().map(|r| r[1].as_str()).collect();
    ensure(settings.contains(&"2") && settings.contains(&"5"), "budget settings")?;
    let fraction = check_sweep_csv(&dir.path().join("f/sweep.csv"), "fraction")?;
    ensure(
        fraction.iter().any(|r| r[2] == "multi-task") && fraction.iter().any(|r| r[2] == "single-task"),
        "fraction variants",
    )?;
    let shuffle = check_sweep_csv(&dir.path().join("s/sweep.csv"), "shuffle")?;

    let subsets: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("f/subsets.json")).map_err(err)?).map_err(err)?;
    let lists: Vec<Vec<String>> = subsets
        .as_array()
        .ok_or("subsets.json is not a list")?
        .iter()
        .map(|s| s["tables"].as_array().into_iter().flatten().filter_map(|v| v.as_str().map(String::from)).collect())
        .collect();
    ensure(lists.len() == 3, "three subsets")?;
    for w in lists.windows(2) {
        ensure(w[0].len() < w[1].len(), "subset sizes not increasing")?;
        ensure(w[0].iter().all(|t| w[1].contains(t)), "subsets not nested")?;
    }

    // Column-shuffle bookkeeping: each gold label travels with its column values.
    let shuffled = shuffle_corpus(&corpus, ShuffleMode::Columns, 9).map_err(err)?;
    let mut moved = 0;
    for (table, types, rels) in shuffled.grouped() {
        let original = corpus.table(&table.id).ok_or("table lost")?;
        let source_of = |c: usize| -> Vec<usize> {
            (0..original.num_columns())
                .filter(|&o| original.columns[o] == table.columns[c])
                .collect()
        };
        for t in types {
            let names: Vec<&str> = t.labels.iter().map(|&l| shuffled.type_vocab().name(l).unwrap()).collect();
            let ok = source_of(t.column_index).into_iter().any(|o| {
                corpus.types_of(&table.id).any(|a| {
                    a.column_index == o
                        && a.labels.iter().map(|&l| corpus.type_vocab().name(l).unwrap()).collect::<Vec<_>>() == names
                })
            });
            ensure(ok, format!("table {}: type label of column {} lost", table.id, t.column_index))?;
            if source_of(t.column_index) != [t.column_index] {
                moved += 1;
            }
        }
        for r in rels {
            let names: Vec<&str> = r.labels.iter().map(|&l| shuffled.relation_vocab().name(l).unwrap()).collect();
            let subj = source_of(r.subject_index);
            let obj = source_of(r.object_index);
            let ok = corpus.relations_of(&table.id).any(|a| {
                subj.contains(&a.subject_index)
                    && obj.contains(&a.object_index)
                    && a.labels.iter().map(|&l| corpus.relation_vocab().name(l).unwrap()).collect::<Vec<_>>() == names
            });
            ensure(ok, format!("table {}: relation label lost", table.id))?;
        }
    }
    ensure(moved > 0, "shuffle moved no annotated column")?;
    Ok(format!(
        "budget {} rows, fraction {} rows, shuffle {} rows; subsets {:?} nested; {moved} moved columns kept their labels",
        budget.len(),
        fraction.len(),
        shuffle.len(),
        lists.iter().map(Vec::len).collect::<Vec<_>>()
    ))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut report = |n: usize, name: &str, started: Instant, outcome: Check| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    };

    let t = Instant::now();
    report(1, "gradient correctness", t, guarded(criterion_1));
    let t = Instant::now();
    report(2, "attention stochasticity", t, guarded(criterion_2));
    let t = Instant::now();
    report(3, "serialization capacity", t, guarded(criterion_3));
    let t = Instant::now();
    report(4, "serialization goldens", t, guarded(criterion_4));

    let t = Instant::now();
    let shared = guarded(context_run);
    let with_run = |f: fn(&ContextRun) -> Check| match &shared {
        Ok(r) => guarded(|| f(r)),
        Err(e) => Err(format!("benchmark run failed: {e}")),
    };
    report(5, "context benefit", t, with_run(criterion_5));
    let t = Instant::now();
    report(6, "relation head", t, with_run(criterion_6));
    let t = Instant::now();
    report(7, "training structure", t, with_run(criterion_7));
    let t = Instant::now();
    report(8, "metric oracles", t, guarded(criterion_8));
    let t = Instant::now();
    report(9, "perplexity", t, guarded(criterion_9));
    let t = Instant::now();
    report(10, "masked-token pretraining", t, guarded(criterion_10));
    let t = Instant::now();
    report(11, "dependency matrix identity", t, with_run(criterion_11));
    let t = Instant::now();
    report(12, "determinism", t, guarded(criterion_12));
    let t = Instant::now();
    report(13, "sweep plumbing", t, guarded(criterion_13));

    if failed > 0 {
        println!("acceptance: {failed} of 13 criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all 13 criteria passed");
}
