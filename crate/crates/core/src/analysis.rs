//! Diagnostics on trained models: the `[CLS]`-to-`[CLS]` attention dependency
//! matrix, contextual column embeddings, k-means, and the budget, training-size,
//! and shuffle sweeps.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::annotator::{AnnotationModel, TaskKind};
use crate::checkpoint::ModelBundle;
use crate::corpus::{Column, Corpus, RelationAnnotation, Splits, Table, TypeAnnotation};
use crate::encoder::forward;
use crate::metrics::csv_err;
use crate::pipeline::{run_experiment, ExperimentConfig};
use crate::serializer::serialize_table;
use crate::trainer::InputEncoding;
use crate::util::{derive_seed, floor_count, rng};
use crate::{Error, Result};

/// Mean last-layer attention between the `[CLS]` markers of typed columns, indexed
/// by (query column type, key column type).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependencyMatrix {
    pub labels: Vec<String>,
    /// Cell mean minus `reference`; `None` where the type pair never co-occurs.
    pub values: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
    /// Count-weighted mean over all observed cells.
    pub reference: f64,
}

impl DependencyMatrix {
    fn write_grid<W: Write, T>(&self, writer: W, cell: impl Fn(usize, usize) -> T) -> Result<()>
    where
        T: ToString,
    {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (a, name) in self.labels.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend((0..self.labels.len()).map(|b| cell(a, b).to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Normalized cells; absent cells are empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.write_grid(writer, |a, b| self.values[a][b].map(|v| v.to_string()).unwrap_or_default())
    }

    pub fn write_counts_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.write_grid(writer, |a, b| self.counts[a][b])
    }
}

/// Aggregates `[CLS]`-to-`[CLS]` attention (last layer, mean over heads) into
/// type-pair cells, including each column's attention to itself.
pub fn column_dependency_matrix(bundle: &ModelBundle, corpus: &Corpus) -> Result<DependencyMatrix> {
    let n = bundle.type_labels.len();
    if n == 0 {
        return Err(Error::Config("model has no column types".into()));
    }
    let mut sums = Array2::<f64>::zeros((n, n));
    let mut counts = vec![vec![0usize; n]; n];
    let mut tables = 0;
    for (table, types, _) in corpus.grouped() {
        if types.is_empty() {
            continue;
        }
        let seq = match serialize_table(table, &bundle.input.serializer, &bundle.input.vocab) {
            Ok(s) => s,
            Err(Error::TooManyColumns { .. }) => continue,
            Err(e) => return Err(e),
        };
        let (_, cache) = forward(&bundle.model.encoder, &seq.ids, None)?;
        let Some(heads) = cache.last_layer_attention() else {
            return Err(Error::Config("dependency matrix needs at least one encoder layer".into()));
        };
        let mut mean = Array2::<f64>::zeros(heads[0].raw_dim());
        for h in heads {
            mean += h;
        }
        mean /= heads.len() as f64;
        for qa in &types {
            for ka in &types {
                let att = mean[[seq.cls_positions[qa.column_index], seq.cls_positions[ka.column_index]]];
                for &ta in &qa.labels {
                    for &tb in &ka.labels {
                        let (ta, tb) = (label_in(bundle, corpus, ta)?, label_in(bundle, corpus, tb)?);
                        sums[[ta, tb]] += att;
                        counts[ta][tb] += 1;
                    }
                }
            }
        }
        tables += 1;
    }
    if tables == 0 {
        return Err(Error::EmptyInput("no annotated tables to analyze".into()));
    }
    let total: usize = counts.iter().flatten().sum();
    let reference = sums.sum() / total as f64;
    let values = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| (counts[a][b] > 0).then(|| sums[[a, b]] / counts[a][b] as f64 - reference))
                .collect()
        })
        .collect();
    Ok(DependencyMatrix {
        labels: bundle.type_labels.names().to_vec(),
        values,
        counts,
        reference,
    })
}

/// Maps a corpus type id onto the model's type vocabulary by name.
fn label_in(bundle: &ModelBundle, corpus: &Corpus, id: usize) -> Result<usize> {
    let name = corpus.type_vocab().name(id).ok_or(Error::OutOfRange {
        index: id,
        len: corpus.type_vocab().len(),
    })?;
    bundle
        .type_labels
        .id(name)
        .ok_or_else(|| Error::Config(format!("type `{name}` is unknown to the model")))
}

/// Eval-mode `[CLS]` outputs of every column of `table`.
pub fn extract_column_embeddings(model: &AnnotationModel, table: &Table, input: &InputEncoding) -> Result<Vec<Array1<f64>>> {
    let seq = serialize_table(table, &input.serializer, &input.vocab)?;
    let (emb, _) = forward(&model.encoder, &seq.ids, None)?;
    Ok(seq.cls_positions.iter().map(|&p| emb.row(p).to_owned()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments no longer
/// change or after `max_iters` assignment steps.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("no vectors to cluster".into()));
    }
    if k == 0 || k > vectors.len() {
        return Err(Error::Config(format!(
            "k must be in 1..={}, got {k}",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("vectors differ in dimension".into()));
    }
    let mut r = rng(seed);
    let mut centroids: Vec<Vec<f64>> = vec![vectors[r.random_range(0..vectors.len())].clone()];
    let mut nearest: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut x = r.random::<f64>() * total;
            let mut pick = vectors.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                if x < *d {
                    pick = i;
                    break;
                }
                x -= d;
            }
            pick
        } else {
            // All points coincide with a centroid; take the first unused index.
            centroids.len()
        };
        centroids.push(vectors[next].clone());
        for (d, v) in nearest.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignments = vec![usize::MAX; vectors.len()];
    let mut inertia_history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        for (a, v) in assignments.iter_mut().zip(vectors) {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, m)| (c, sq_dist(v, m)))
                .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
            inertia += d;
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        inertia_history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (&a, v) in assignments.iter().zip(vectors) {
            sizes[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        for ((c, s), n) in centroids.iter_mut().zip(sums).zip(sizes) {
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia_history,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub variant: String,
    pub task: TaskKind,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub max_columns: usize,
    pub train_tables: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweep: String,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "sweep",
    "setting",
    "variant",
    "task",
    "micro_f1",
    "macro_f1",
    "max_columns",
    "train_tables",
    "seconds",
];

impl SweepReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                self.sweep.clone(),
                r.setting.clone(),
                r.variant.clone(),
                r.task.name().to_string(),
                r.micro_f1.to_string(),
                r.macro_f1.to_string(),
                r.max_columns.to_string(),
                r.train_tables.to_string(),
                r.seconds.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_rows(setting: &str, variant: &str, splits: &Splits, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let started = Instant::now();
    let run = run_experiment(splits, cfg, None, &mut ())?;
    let seconds = started.elapsed().as_secs_f64();
    Ok(run
        .test_reports
        .iter()
        .map(|(task, r)| SweepRow {
            setting: setting.to_string(),
            variant: variant.to_string(),
            task: *task,
            micro_f1: r.micro.f1,
            macro_f1: r.macro_avg.f1,
            max_columns: cfg.serializer_config().max_columns(),
            train_tables: splits.train.len(),
            seconds,
        })
        .collect())
}

/// Full train and test evaluation per per-column token budget.
pub fn token_budget_sweep(splits: &Splits, base: &ExperimentConfig, budgets: &[usize]) -> Result<SweepReport> {
    if budgets.is_empty() || budgets.contains(&0) {
        return Err(Error::Config("budgets must be a non-empty list of positive integers".into()));
    }
    let mut rows = Vec::new();
    for &b in budgets {
        let cfg = ExperimentConfig {
            max_tokens_per_column: b,
            ..base.clone()
        };
        rows.extend(run_rows(&b.to_string(), "multi-task", splits, &cfg)?);
    }
    Ok(SweepReport {
        sweep: "budget".into(),
        rows,
    })
}

/// Training subsets for `fractions`: prefixes of one seeded shuffle, so a smaller
/// fraction's tables are always contained in a larger one's.
pub fn nested_subsets(train: &Corpus, fractions: &[f64], seed: u64) -> Result<Vec<Corpus>> {
    if fractions.is_empty() {
        return Err(Error::Config("no fractions given".into()));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng(derive_seed(seed, 0x4652_4143)));
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("fraction must be in (0, 1], got {f}")));
            }
            let n = floor_count(train.len(), f);
            if n == 0 {
                return Err(Error::EmptyInput(format!(
                    "fraction {f} of {} tables is empty",
                    train.len()
                )));
            }
            let mut idx = order[..n].to_vec();
            idx.sort_unstable();
            Ok(train.subset(&idx))
        })
        .collect()
}

/// Learning curve over training-set fractions, for the multi-task model and for one
/// single-task model per configured task.
pub fn learning_curve(splits: &Splits, base: &ExperimentConfig, fractions: &[f64], seed: u64) -> Result<SweepReport> {
    let subsets = nested_subsets(&splits.train, fractions, seed)?;
    let mut rows = Vec::new();
    for (&f, train) in fractions.iter().zip(subsets) {
        let sub = Splits {
            train,
            valid: splits.valid.clone(),
            test: splits.test.clone(),
        };
        rows.extend(run_rows(&f.to_string(), "multi-task", &sub, base)?);
        for &task in &base.tasks {
            let cfg = ExperimentConfig {
                tasks: vec![task],
                ..base.clone()
            };
            rows.extend(run_rows(&f.to_string(), "single-task", &sub, &cfg)?);
        }
    }
    Ok(SweepReport {
        sweep: "fraction".into(),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShuffleMode {
    Rows,
    Columns,
}

impl std::str::FromStr for ShuffleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rows" => Ok(ShuffleMode::Rows),
            "columns" => Ok(ShuffleMode::Columns),
            other => Err(Error::Config(format!(
                "unknown shuffle mode `{other}` (expected rows or columns)"
            ))),
        }
    }
}

/// Copy of `corpus` with every table's rows or columns permuted.
///
/// Rows: one permutation over the longest column, applied to every column (shorter
/// columns keep the values whose indices they have). Columns: annotations are
/// re-indexed so that each label stays with its column.
pub fn shuffle_corpus(corpus: &Corpus, mode: ShuffleMode, seed: u64) -> Result<Corpus> {
    let mut r = rng(derive_seed(seed, 0x5348_5546));
    let mut tables = Vec::with_capacity(corpus.len());
    let mut types = Vec::new();
    let mut rels = Vec::new();
    for (table, ty, rl) in corpus.grouped() {
        match mode {
            ShuffleMode::Rows => {
                let longest = table.columns.iter().map(Column::len).max().unwrap_or(0);
                let mut perm: Vec<usize> = (0..longest).collect();
                perm.shuffle(&mut r);
                let columns = table
                    .columns
                    .iter()
                    .map(|c| Column {
                        values: perm
                            .iter()
                            .filter(|&&i| i < c.len())
                            .map(|&i| c.values[i].clone())
                            .collect(),
                    })
                    .collect();
                tables.push(Table {
                    id: table.id.clone(),
                    columns,
                    headers: table.headers.clone(),
                });
                types.extend(ty.into_iter().cloned());
                rels.extend(rl.into_iter().cloned());
            }
            ShuffleMode::Columns => {
                // order[new] = old
                let mut order: Vec<usize> = (0..table.num_columns()).collect();
                order.shuffle(&mut r);
                let mut new_index = vec![0; order.len()];
                for (new, &old) in order.iter().enumerate() {
                    new_index[old] = new;
                }
                tables.push(table.project(&order));
                types.extend(ty.into_iter().map(|a| TypeAnnotation {
                    column_index: new_index[a.column_index],
                    ..a.clone()
                }));
                rels.extend(rl.into_iter().map(|a| RelationAnnotation {
                    subject_index: new_index[a.subject_index],
                    object_index: new_index[a.object_index],
                    ..a.clone()
                }));
            }
        }
    }
    corpus.with_contents(tables, types, rels)
}

/// Trains and evaluates on the original splits and on shuffled copies of all three,
/// from the same initialization seed.
pub fn shuffle_robustness(splits: &Splits, base: &ExperimentConfig, mode: ShuffleMode, seed: u64) -> Result<SweepReport> {
    let mut rows = run_rows("baseline", "multi-task", splits, base)?;
    let shuffled = Splits {
        train: shuffle_corpus(&splits.train, mode, seed)?,
        valid: shuffle_corpus(&splits.valid, mode, derive_seed(seed, 1))?,
        test: shuffle_corpus(&splits.test, mode, derive_seed(seed, 2))?,
    };
    let label = match mode {
        ShuffleMode::Rows => "shuffled-rows",
        ShuffleMode::Columns => "shuffled-columns",
    };
    rows.extend(run_rows(label, "multi-task", &shuffled, base)?);
    Ok(SweepReport {
        sweep: "shuffle".into(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::corpus::{generate_synthetic_corpus, split_corpus, LabelKind, LabelMode, LabelVocabulary, SyntheticSpec};
    use crate::encoder::{EncoderConfig, EncoderParams};
    use crate::serializer::SerializerConfig;
    use crate::tokenizer::build_token_vocabulary;
    use crate::trainer::InputScheme;

    fn bundle_for(corpus: &Corpus) -> ModelBundle {
        let vocab = build_token_vocabulary(corpus, 500, 1).unwrap();
        let cfg = EncoderConfig {
            num_layers: 1,
            num_heads: 2,
            d_model: 8,
            d_ff: 16,
            max_seq_len: 40,
            vocab_size: vocab.len(),
            dropout_rate: 0.0,
            seed: 2,
        };
        ModelBundle {
            model: AnnotationModel::new(
                EncoderParams::init(&cfg).unwrap(),
                corpus.type_vocab().len(),
                corpus.relation_vocab().len(),
                LabelMode::Multiclass,
                LabelMode::Multiclass,
            ),
            input: InputEncoding {
                vocab,
                serializer: SerializerConfig {
                    max_tokens_per_column: 5,
                    max_seq_len: 40,
                    include_metadata: false,
                },
                scheme: InputScheme::Table,
            },
            type_labels: corpus.type_vocab().clone(),
            relation_labels: corpus.relation_vocab().clone(),
        }
    }

    fn synthetic(n: usize) -> Corpus {
        generate_synthetic_corpus(&SyntheticSpec::context_benchmark(n), 5).unwrap()
    }

    #[test]
    fn dependency_reference_identity() {
        let c = synthetic(30);
        let m = column_dependency_matrix(&bundle_for(&c), &c).unwrap();
        let mut weighted = 0.0;
        for (vals, counts) in m.values.iter().zip(&m.counts) {
            for (v, &n) in vals.iter().zip(counts) {
                assert_eq!(v.is_some(), n > 0);
                weighted += v.unwrap_or(0.0) * n as f64;
            }
        }
        assert!(weighted.abs() < 1e-9);
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), m.labels.len() + 1);
    }

    #[test]
    fn single_column_tables_have_diagonal_support() {
        let tables = (0..4)
            .map(|i| Table::new(format!("t{i}"), vec![Column::new(["a", "b"])], None).unwrap())
            .collect();
        let types = (0..4)
            .map(|i| TypeAnnotation {
                table_id: format!("t{i}"),
                column_index: 0,
                labels: vec![i % 2],
            })
            .collect();
        let c = Corpus::new(
            tables,
            types,
            vec![],
            LabelVocabulary::from_names(LabelKind::Type, ["x", "y"]).unwrap(),
            LabelVocabulary::empty(LabelKind::Relation),
        )
        .unwrap();
        let m = column_dependency_matrix(&bundle_for(&c), &c).unwrap();
        assert_eq!(m.counts, vec![vec![2, 0], vec![0, 2]]);
        assert!(m.values[0][1].is_none());
    }

    #[test]
    fn embeddings_count_determinism_and_context() {
        let c = synthetic(10);
        let b = bundle_for(&c);
        let t = &c.tables()[0];
        let e1 = extract_column_embeddings(&b.model, t, &b.input).unwrap();
        assert_eq!(e1.len(), t.num_columns());
        assert_eq!(e1, extract_column_embeddings(&b.model, t, &b.input).unwrap());
        let mut other = t.clone();
        other.columns[0] = c.tables()[1].columns[0].clone();
        other.columns[0].values.push("extra".into());
        let e2 = extract_column_embeddings(&b.model, &other, &b.input).unwrap();
        assert_ne!(e1[1], e2[1]);
    }

    #[test]
    fn kmeans_fixtures() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 10.0], vec![10.0, 10.2], vec![0.0, 0.2]];
        let r = kmeans(&pts, 2, 1, 50).unwrap();
        let a = &r.assignments;
        assert!(a[0] == a[1] && a[1] == a[4] && a[2] == a[3] && a[0] != a[2]);
        assert!(r.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert_eq!(r, kmeans(&pts, 2, 1, 50).unwrap());
        let all = kmeans(&pts, 5, 3, 10).unwrap();
        assert_eq!(*all.inertia_history.last().unwrap(), 0.0);
        assert_eq!(all.assignments.iter().collect::<HashSet<_>>().len(), 5);
        assert!(kmeans(&pts, 0, 1, 5).is_err());
        assert!(kmeans(&[], 1, 1, 5).is_err());
    }

    #[test]
    fn nested_subsets_are_nested() {
        let c = synthetic(40);
        let subs = nested_subsets(&c, &[0.1, 0.25, 0.5, 1.0], 3).unwrap();
        let ids = |c: &Corpus| c.tables().iter().map(|t| t.id.clone()).collect::<HashSet<_>>();
        assert_eq!(subs.iter().map(Corpus::len).collect::<Vec<_>>(), vec![4, 10, 20, 40]);
        for w in subs.windows(2) {
            assert!(ids(&w[0]).is_subset(&ids(&w[1])));
        }
        assert!(nested_subsets(&c, &[0.01], 3).is_err());
    }

    #[test]
    fn column_shuffle_keeps_labels_with_columns() {
        let c = synthetic(20);
        let s = shuffle_corpus(&c, ShuffleMode::Columns, 9).unwrap();
        let mut moved = 0;
        for (orig, (tab, types, rels)) in c.tables().iter().zip(s.grouped()) {
            for a in types {
                let old = orig.columns.iter().position(|col| *col == tab.columns[a.column_index]);
                let orig_ann = c.types_of(&orig.id).find(|o| Some(o.column_index) == old).unwrap();
                assert_eq!(orig_ann.labels, a.labels);
                if old != Some(a.column_index) {
                    moved += 1;
                }
            }
            for a in rels {
                assert!(tab.columns[a.subject_index].values[0].starts_with("film") || tab.columns[a.subject_index].values[0].starts_with("sport"));
            }
        }
        assert!(moved > 0);
    }

    #[test]
    fn row_shuffle_leaves_single_row_tables() {
        let c = Corpus::new(
            vec![Table::new("t", vec![Column::new(["a"]), Column::new(["b"])], None).unwrap()],
            vec![],
            vec![],
            LabelVocabulary::empty(LabelKind::Type),
            LabelVocabulary::empty(LabelKind::Relation),
        )
        .unwrap();
        assert_eq!(shuffle_corpus(&c, ShuffleMode::Rows, 1).unwrap(), c);
        let big = synthetic(10);
        let s = shuffle_corpus(&big, ShuffleMode::Rows, 1).unwrap();
        for (a, b) in big.tables().iter().zip(s.tables()) {
            for (x, y) in a.columns.iter().zip(&b.columns) {
                let mut xs = x.values.clone();
                let mut ys = y.values.clone();
                xs.sort();
                ys.sort();
                assert_eq!(xs, ys);
            }
        }
    }

    #[test]
    fn sweeps_emit_rows() {
        let c = synthetic(40);
        let splits = split_corpus(&c, (0.6, 0.2, 0.2), 1).unwrap();
        let base = ExperimentConfig {
            epochs: 1,
            lr: 1e-3,
            num_layers: 1,
            num_heads: 2,
            d_model: 8,
            d_ff: 16,
            max_seq_len: 40,
            max_tokens_per_column: 4,
            dropout: 0.0,
            ..Default::default()
        };
        let r = token_budget_sweep(&splits, &base, &[2, 4]).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.rows[0].max_columns, 13);
        let r = learning_curve(&splits, &base, &[0.5, 1.0], 1).unwrap();
        assert_eq!(r.rows.len(), 2 * 4);
        let r = shuffle_robustness(&splits, &base, ShuffleMode::Columns, 1).unwrap();
        assert_eq!(r.rows.len(), 4);
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with(&SWEEP_COLUMNS.join(",")));
    }
}
