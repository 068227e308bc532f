//! Synthetic tables where some column types can only be resolved from table context.
//!
//! Every table has a topic column at index 0 whose values come from a vocabulary
//! private to the table's topic. The remaining columns are either *ambiguous*, with
//! values drawn from a pool shared by all topics and a gold type chosen by the topic,
//! or *plain*, with values and type independent of the topic. Relations between
//! column 0 and each other column are looked up from a per-topic rule table.
//!
//! Because an ambiguous column's values are independent of the topic, a model that
//! only sees that column cannot beat guessing the most likely topic, while a model
//! that sees the topic column can be perfect.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    Column, Corpus, LabelKind, LabelVocabulary, RelationAnnotation, Table, TypeAnnotation,
};
use crate::util::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    /// Type label of the topic column, also the prefix of its cell values.
    pub name: String,
    pub vocab_size: usize,
}

/// A family of column types that share one value pool; the topic picks the member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguousGroup {
    pub pool: String,
    pub pool_size: usize,
    /// Gold type per topic, indexed like [`SyntheticSpec::topics`].
    pub types: Vec<String>,
    /// Relation from the topic column to a column of this group, per topic.
    pub relations: Vec<String>,
}

/// A column type whose values and label do not depend on the topic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainGroup {
    pub type_name: String,
    pub pool_size: usize,
    pub relations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_tables: usize,
    /// Inclusive range; includes the topic column.
    pub columns_per_table: (usize, usize),
    /// Inclusive range; all columns of one table share a row count.
    pub rows_per_column: (usize, usize),
    pub topics: Vec<Topic>,
    pub ambiguous: Vec<AmbiguousGroup>,
    pub plain: Vec<PlainGroup>,
}

/// Role of a generated column, exposed so tests can select ambiguous columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnRole {
    Topic,
    Ambiguous(usize),
    Plain(usize),
}

impl SyntheticSpec {
    /// Two topics (`film`, `sport`), one ambiguous pair (`director`/`athlete`) over a
    /// shared pool of 50 person names, and one plain `country` column type.
    pub fn context_benchmark(num_tables: usize) -> Self {
        SyntheticSpec {
            num_tables,
            columns_per_table: (2, 4),
            rows_per_column: (3, 5),
            topics: vec![
                Topic {
                    name: "film".into(),
                    vocab_size: 40,
                },
                Topic {
                    name: "sport".into(),
                    vocab_size: 40,
                },
            ],
            ambiguous: vec![AmbiguousGroup {
                pool: "person".into(),
                pool_size: 50,
                types: vec!["director".into(), "athlete".into()],
                relations: vec!["directed_by".into(), "has_player".into()],
            }],
            plain: vec![PlainGroup {
                type_name: "country".into(),
                pool_size: 20,
                relations: vec!["produced_in".into(), "based_in".into()],
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n_topics = self.topics.len();
        if n_topics < 2 {
            return Err(Error::Config("synthetic spec needs at least 2 topics".into()));
        }
        if self.ambiguous.is_empty() {
            return Err(Error::Config(
                "synthetic spec needs at least one ambiguous group".into(),
            ));
        }
        let (cmin, cmax) = self.columns_per_table;
        if cmin < 2 || cmax < cmin {
            return Err(Error::Config(format!(
                "columns_per_table must satisfy 2 <= min <= max, got {:?}",
                self.columns_per_table
            )));
        }
        let (rmin, rmax) = self.rows_per_column;
        if rmin < 1 || rmax < rmin {
            return Err(Error::Config(format!(
                "rows_per_column must satisfy 1 <= min <= max, got {:?}",
                self.rows_per_column
            )));
        }
        let mut prefixes: Vec<&str> = Vec::new();
        for t in &self.topics {
            if t.vocab_size == 0 {
                return Err(Error::Config(format!("topic `{}` has an empty vocabulary", t.name)));
            }
            prefixes.push(&t.name);
        }
        for g in &self.ambiguous {
            if g.pool_size == 0 {
                return Err(Error::Config(format!("pool `{}` is empty", g.pool)));
            }
            if g.types.len() != n_topics || g.relations.len() != n_topics {
                return Err(Error::Config(format!(
                    "pool `{}` needs one type and one relation per topic",
                    g.pool
                )));
            }
            prefixes.push(&g.pool);
        }
        for g in &self.plain {
            if g.pool_size == 0 {
                return Err(Error::Config(format!("pool `{}` is empty", g.type_name)));
            }
            if g.relations.len() != n_topics {
                return Err(Error::Config(format!(
                    "plain type `{}` needs one relation per topic",
                    g.type_name
                )));
            }
            prefixes.push(&g.type_name);
        }
        // Values are `<prefix><number>`; prefixes must be alphabetic and prefix-free
        // so the vocabularies stay disjoint.
        for (i, a) in prefixes.iter().enumerate() {
            if a.is_empty() || !a.chars().all(char::is_alphabetic) {
                return Err(Error::Config(format!(
                    "value prefix `{a}` must be non-empty and alphabetic"
                )));
            }
            for b in &prefixes[i + 1..] {
                if a.starts_with(b) || b.starts_with(a) {
                    return Err(Error::Config(format!(
                        "value prefixes `{a}` and `{b}` overlap"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Best achievable accuracy on ambiguous columns from their values alone.
    ///
    /// Values are independent of the topic, so the posterior over types equals the
    /// prior induced by the uniform topic distribution.
    pub fn bayes_single_column_accuracy(&self) -> f64 {
        let n_topics = self.topics.len() as f64;
        self.ambiguous
            .iter()
            .map(|g| {
                let mut best = 0usize;
                for ty in &g.types {
                    best = best.max(g.types.iter().filter(|t| *t == ty).count());
                }
                best as f64 / n_topics
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Best achievable accuracy on ambiguous columns given the whole table. The topic
    /// column's vocabulary identifies the topic exactly.
    pub fn bayes_table_accuracy(&self) -> f64 {
        1.0
    }

    /// Type names that only appear on ambiguous columns.
    pub fn ambiguous_type_names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for g in &self.ambiguous {
            for t in &g.types {
                if !out.contains(&t.as_str()) {
                    out.push(t);
                }
            }
        }
        out
    }
}

/// A generated corpus plus the role of every column, aligned with its tables.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub roles: Vec<Vec<ColumnRole>>,
    pub topics: Vec<usize>,
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Corpus> {
    generate_with_roles(spec, seed).map(|s| s.corpus)
}

pub fn generate_with_roles(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = rng(seed);
    let mut type_vocab = LabelVocabulary::empty(LabelKind::Type);
    let mut rel_vocab = LabelVocabulary::empty(LabelKind::Relation);
    let mut tables = Vec::with_capacity(spec.num_tables);
    let mut types = Vec::new();
    let mut rels = Vec::new();
    let mut all_roles = Vec::with_capacity(spec.num_tables);
    let mut topics = Vec::with_capacity(spec.num_tables);
    let n_groups = spec.ambiguous.len() + spec.plain.len();
    let width = spec.num_tables.saturating_sub(1).to_string().len().max(4);

    for i in 0..spec.num_tables {
        let id = format!("syn{i:0width$}");
        let topic_idx = rng.random_range(0..spec.topics.len());
        let topic = &spec.topics[topic_idx];
        let n_cols = rng.random_range(spec.columns_per_table.0..=spec.columns_per_table.1);
        let rows = rng.random_range(spec.rows_per_column.0..=spec.rows_per_column.1);

        let mut roles = vec![ColumnRole::Ambiguous(rng.random_range(0..spec.ambiguous.len()))];
        for _ in 2..n_cols {
            let g = rng.random_range(0..n_groups);
            roles.push(if g < spec.ambiguous.len() {
                ColumnRole::Ambiguous(g)
            } else {
                ColumnRole::Plain(g - spec.ambiguous.len())
            });
        }
        roles.shuffle(&mut rng);
        roles.insert(0, ColumnRole::Topic);

        let mut columns = Vec::with_capacity(n_cols);
        for (j, role) in roles.iter().enumerate() {
            let (prefix, size, type_name, relation) = match *role {
                ColumnRole::Topic => (&topic.name, topic.vocab_size, &topic.name, None),
                ColumnRole::Ambiguous(g) => {
                    let g = &spec.ambiguous[g];
                    (&g.pool, g.pool_size, &g.types[topic_idx], Some(&g.relations[topic_idx]))
                }
                ColumnRole::Plain(g) => {
                    let g = &spec.plain[g];
                    (&g.type_name, g.pool_size, &g.type_name, Some(&g.relations[topic_idx]))
                }
            };
            let values: Vec<String> = (0..rows)
                .map(|_| format!("{prefix}{}", rng.random_range(0..size)))
                .collect();
            columns.push(Column { values });
            types.push(TypeAnnotation {
                table_id: id.clone(),
                column_index: j,
                labels: vec![type_vocab.intern(type_name)],
            });
            if let Some(rel) = relation {
                rels.push(RelationAnnotation {
                    table_id: id.clone(),
                    subject_index: 0,
                    object_index: j,
                    labels: vec![rel_vocab.intern(rel)],
                });
            }
        }
        tables.push(Table {
            id,
            columns,
            headers: None,
        });
        all_roles.push(roles);
        topics.push(topic_idx);
    }

    Ok(SyntheticCorpus {
        corpus: Corpus::new(tables, types, rels, type_vocab, rel_vocab)?,
        roles: all_roles,
        topics,
    })
}

/// Single-column tables whose cells walk a fixed cycle of words, so every token is
/// determined by its neighbour: `happy` is always followed by `feet`.
pub fn generate_bigram_corpus(num_tables: usize, cycle_len: usize, cells: usize, seed: u64) -> Result<Corpus> {
    if cycle_len < 2 || cells == 0 {
        return Err(Error::Config(
            "bigram corpus needs a cycle of at least 2 words and at least one cell".into(),
        ));
    }
    let words: Vec<String> = ["happy", "feet"]
        .into_iter()
        .map(String::from)
        .chain((2..cycle_len).map(|k| format!("w{k}")))
        .take(cycle_len)
        .collect();
    let mut rng = rng(seed);
    let tables = (0..num_tables)
        .map(|i| {
            let start = rng.random_range(0..cycle_len);
            let values = (0..cells)
                .map(|c| {
                    let a = (start + 2 * c) % cycle_len;
                    format!("{} {}", words[a], words[(a + 1) % cycle_len])
                })
                .collect();
            Table {
                id: format!("bigram{i}"),
                columns: vec![Column { values }],
                headers: None,
            }
        })
        .collect();
    Corpus::new(
        tables,
        vec![],
        vec![],
        LabelVocabulary::empty(LabelKind::Type),
        LabelVocabulary::empty(LabelKind::Relation),
    )
}
