//! Turns columns, column pairs, and whole tables into token-id sequences.
//!
//! Table layout: `[CLS] col1-tokens [CLS] col2-tokens ... [CLS] coln-tokens [SEP]`.
//! Each column contributes at most `max_tokens_per_column` tokens, taken in row
//! order and cut mid-cell when the budget runs out.

use serde::{Deserialize, Serialize};

use crate::corpus::{Column, Table};
use crate::tokenizer::{tokenize_cell, TokenId, TokenVocabulary, CLS, SEP};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializerConfig {
    pub max_tokens_per_column: usize,
    pub max_seq_len: usize,
    /// Prepend the column header's tokens to the column's cell tokens.
    pub include_metadata: bool,
}

impl Default for SerializerConfig {
    fn default() -> Self {
        SerializerConfig {
            max_tokens_per_column: 32,
            max_seq_len: 512,
            include_metadata: false,
        }
    }
}

impl SerializerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens_per_column < 1 {
            return Err(Error::Config("max_tokens_per_column must be at least 1".into()));
        }
        if self.max_seq_len < self.max_tokens_per_column + 2 {
            return Err(Error::Config(format!(
                "max_seq_len {} cannot hold one column of {} tokens",
                self.max_seq_len, self.max_tokens_per_column
            )));
        }
        Ok(())
    }

    /// Widest table that fits: every column costs its budget plus one `[CLS]`, and
    /// the sequence ends with one `[SEP]`.
    pub fn max_columns(&self) -> usize {
        (self.max_seq_len - 1) / (self.max_tokens_per_column + 1)
    }
}

pub fn max_columns(cfg: &SerializerConfig) -> usize {
    cfg.max_columns()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SequenceSource {
    pub table_id: String,
    /// Table column indices, in serialization order.
    pub columns: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub ids: Vec<TokenId>,
    pub cls_positions: Vec<usize>,
    /// Half-open ranges, one per serialized column. Each begins at the marker that
    /// opens the column: its `[CLS]`, or for the second half of a column pair, the
    /// separating `[SEP]`.
    pub column_spans: Vec<(usize, usize)>,
    pub source: SequenceSource,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Position whose encoder output represents serialized column `j`.
    pub fn anchor(&self, j: usize) -> Option<usize> {
        self.column_spans.get(j).map(|s| s.0)
    }

    pub fn num_columns(&self) -> usize {
        self.column_spans.len()
    }

    /// Space-joined token strings, for debugging and golden tests.
    pub fn render(&self, vocab: &TokenVocabulary) -> String {
        vocab.decode(&self.ids).join(" ")
    }
}

fn column_tokens(
    column: &Column,
    header: Option<&str>,
    cfg: &SerializerConfig,
    vocab: &TokenVocabulary,
) -> Vec<TokenId> {
    let budget = cfg.max_tokens_per_column;
    let header = header.filter(|_| cfg.include_metadata);
    let mut out = Vec::with_capacity(budget);
    for text in header.into_iter().chain(column.values.iter().map(String::as_str)) {
        for tok in tokenize_cell(text) {
            if out.len() == budget {
                return out;
            }
            out.push(vocab.id(&tok).unwrap_or(crate::tokenizer::UNK));
        }
    }
    out
}

/// `[CLS] v_1 ... v_m [SEP]` for one column.
pub fn serialize_single_column(
    column: &Column,
    cfg: &SerializerConfig,
    vocab: &TokenVocabulary,
) -> Result<EncodedSequence> {
    cfg.validate()?;
    if column.is_empty() {
        return Err(Error::EmptyInput("cannot serialize an empty column".into()));
    }
    let mut ids = vec![CLS];
    ids.extend(column_tokens(column, None, cfg, vocab));
    let end = ids.len();
    ids.push(SEP);
    Ok(EncodedSequence {
        ids,
        cls_positions: vec![0],
        column_spans: vec![(0, end)],
        source: SequenceSource {
            table_id: String::new(),
            columns: vec![0],
        },
    })
}

/// `[CLS] a-tokens [SEP] b-tokens [SEP]`.
pub fn serialize_column_pair(
    a: &Column,
    b: &Column,
    cfg: &SerializerConfig,
    vocab: &TokenVocabulary,
) -> Result<EncodedSequence> {
    pair_inner(a, None, b, None, cfg, vocab)
}

fn pair_inner(
    a: &Column,
    a_header: Option<&str>,
    b: &Column,
    b_header: Option<&str>,
    cfg: &SerializerConfig,
    vocab: &TokenVocabulary,
) -> Result<EncodedSequence> {
    cfg.validate()?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("cannot serialize an empty column".into()));
    }
    if 2 * cfg.max_tokens_per_column + 3 > cfg.max_seq_len {
        return Err(Error::Config(format!(
            "max_seq_len {} cannot hold a column pair of {} tokens each",
            cfg.max_seq_len, cfg.max_tokens_per_column
        )));
    }
    let mut ids = vec![CLS];
    ids.extend(column_tokens(a, a_header, cfg, vocab));
    let mid = ids.len();
    ids.push(SEP);
    ids.extend(column_tokens(b, b_header, cfg, vocab));
    let end = ids.len();
    ids.push(SEP);
    Ok(EncodedSequence {
        ids,
        cls_positions: vec![0],
        column_spans: vec![(0, mid), (mid, end)],
        source: SequenceSource {
            table_id: String::new(),
            columns: vec![0, 1],
        },
    })
}

/// Column pair `(subject, object)` of a table, with headers when configured.
pub fn serialize_table_pair(
    table: &Table,
    subject: usize,
    object: usize,
    cfg: &SerializerConfig,
    vocab: &TokenVocabulary,
) -> Result<EncodedSequence> {
    for idx in [subject, object] {
        if idx >= table.num_columns() {
            return Err(Error::OutOfRange {
                index: idx,
                len: table.num_columns(),
            });
        }
    }
    let mut seq = pair_inner(
        &table.columns[subject],
        table.header(subject),
        &table.columns[object],
        table.header(object),
        cfg,
        vocab,
    )?;
    seq.source = SequenceSource {
        table_id: table.id.clone(),
        columns: vec![subject, object],
    };
    Ok(seq)
}

/// The whole table, one `[CLS]` per column and a single trailing `[SEP]`.
pub fn serialize_table(
    table: &Table,
    cfg: &SerializerConfig,
    vocab: &TokenVocabulary,
) -> Result<EncodedSequence> {
    let all: Vec<usize> = (0..table.num_columns()).collect();
    serialize_columns(table, &all, cfg, vocab)
}

/// Like [`serialize_table`] restricted to `columns`, in the given order.
pub fn serialize_columns(
    table: &Table,
    columns: &[usize],
    cfg: &SerializerConfig,
    vocab: &TokenVocabulary,
) -> Result<EncodedSequence> {
    cfg.validate()?;
    if columns.is_empty() {
        return Err(Error::EmptyInput(format!("table `{}` has no columns to serialize", table.id)));
    }
    let max = cfg.max_columns();
    if columns.len() > max {
        return Err(Error::TooManyColumns {
            table: table.id.clone(),
            columns: columns.len(),
            max_columns: max,
        });
    }
    let mut ids = Vec::with_capacity(columns.len() * (cfg.max_tokens_per_column + 1) + 1);
    let mut cls_positions = Vec::with_capacity(columns.len());
    let mut column_spans = Vec::with_capacity(columns.len());
    for &j in columns {
        let column = table.columns.get(j).ok_or(Error::OutOfRange {
            index: j,
            len: table.num_columns(),
        })?;
        if column.is_empty() {
            return Err(Error::invariant(&table.id, format!("column {j} is empty")));
        }
        let start = ids.len();
        cls_positions.push(start);
        ids.push(CLS);
        ids.extend(column_tokens(column, table.header(j), cfg, vocab));
        column_spans.push((start, ids.len()));
    }
    ids.push(SEP);
    Ok(EncodedSequence {
        ids,
        cls_positions,
        column_spans,
        source: SequenceSource {
            table_id: table.id.clone(),
            columns: columns.to_vec(),
        },
    })
}
