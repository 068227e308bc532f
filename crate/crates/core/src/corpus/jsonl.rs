//! Line-delimited JSON corpus files: one table with its annotations per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Column, Corpus, LabelKind, LabelMode, LabelVocabulary, RelationAnnotation, Table,
    TypeAnnotation,
};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableRecord {
    id: String,
    #[serde(default)]
    headers: Option<Vec<String>>,
    columns: Vec<Vec<String>>,
    #[serde(default)]
    types: Vec<Vec<String>>,
    #[serde(default)]
    relations: Vec<RelationRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationRecord {
    #[serde(default)]
    subj: usize,
    obj: usize,
    labels: Vec<String>,
}

pub fn load_corpus(path: impl AsRef<Path>, mode: LabelMode) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_corpus(BufReader::new(file), path, mode)
}

/// Parses a JSONL corpus stream. `origin` only labels error messages.
///
/// The same `mode` applies to type and relation labels. Blank lines are skipped.
pub fn parse_corpus(reader: impl BufRead, origin: impl AsRef<Path>, mode: LabelMode) -> Result<Corpus> {
    let origin = origin.as_ref();
    let mut tables = Vec::new();
    let mut type_annotations = Vec::new();
    let mut relation_annotations = Vec::new();
    let mut type_vocab = LabelVocabulary::empty(LabelKind::Type);
    let mut relation_vocab = LabelVocabulary::empty(LabelKind::Relation);

    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            message,
        };
        let record: TableRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;

        let columns: Vec<Column> = record.columns.into_iter().map(|values| Column { values }).collect();
        if !record.types.is_empty() && record.types.len() != columns.len() {
            return Err(Error::invariant(
                &record.id,
                format!(
                    "{} type entries for {} columns",
                    record.types.len(),
                    columns.len()
                ),
            ));
        }
        for (j, labels) in record.types.iter().enumerate() {
            if labels.is_empty() {
                continue;
            }
            check_cardinality(&record.id, labels.len(), mode)?;
            type_annotations.push(TypeAnnotation {
                table_id: record.id.clone(),
                column_index: j,
                labels: labels.iter().map(|l| type_vocab.intern(l)).collect(),
            });
        }
        for rel in &record.relations {
            check_cardinality(&record.id, rel.labels.len(), mode)?;
            relation_annotations.push(RelationAnnotation {
                table_id: record.id.clone(),
                subject_index: rel.subj,
                object_index: rel.obj,
                labels: rel.labels.iter().map(|l| relation_vocab.intern(l)).collect(),
            });
        }
        tables.push(Table {
            id: record.id,
            columns,
            headers: record.headers,
        });
    }

    Corpus::new(
        tables,
        type_annotations,
        relation_annotations,
        type_vocab,
        relation_vocab,
    )
}

fn check_cardinality(table: &str, n: usize, mode: LabelMode) -> Result<()> {
    if mode == LabelMode::Multiclass && n > 1 {
        return Err(Error::invariant(
            table,
            format!("{n} labels on one item in multiclass mode"),
        ));
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_corpus(corpus, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_corpus(corpus: &Corpus, mut out: impl Write) -> Result<()> {
    let type_names = corpus.type_vocab();
    let rel_names = corpus.relation_vocab();
    for (table, types, rels) in corpus.grouped() {
        let mut per_column = vec![Vec::new(); table.num_columns()];
        for a in types {
            per_column[a.column_index] = names(type_names, &a.labels);
        }
        let record = TableRecord {
            id: table.id.clone(),
            headers: table.headers.clone(),
            columns: table.columns.iter().map(|c| c.values.clone()).collect(),
            types: per_column,
            relations: rels
                .into_iter()
                .map(|a| RelationRecord {
                    subj: a.subject_index,
                    obj: a.object_index,
                    labels: names(rel_names, &a.labels),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn names(vocab: &LabelVocabulary, ids: &[usize]) -> Vec<String> {
    ids.iter()
        .map(|&id| vocab.name(id).unwrap_or_default().to_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, mode: LabelMode) -> Result<Corpus> {
        parse_corpus(text.as_bytes(), "fixture.jsonl", mode)
    }

    #[test]
    fn one_table_two_types() {
        let c = parse(
            r#"{"id":"t1","headers":null,"columns":[["a"],["b"]],"types":[["x"],["y"]],"relations":[]}"#,
            LabelMode::Multiclass,
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.type_vocab().len(), 2);
        assert_eq!(c.type_annotations().len(), 2);
    }

    #[test]
    fn subject_equals_object_is_an_error() {
        let err = parse(
            r#"{"id":"t1","columns":[["a"],["b"]],"relations":[{"subj":0,"obj":0,"labels":["r"]}]}"#,
            LabelMode::Multiclass,
        )
        .unwrap_err();
        assert!(err.to_string().contains("subject equals object"), "{err}");
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = "{\"id\":\"a\",\"columns\":[[\"x\"]]}\n{not json}\n";
        match parse(text, LabelMode::Multiclass).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multiclass_rejects_multilabel_rows() {
        let text = r#"{"id":"t","columns":[["x"]],"types":[["a","b"]]}"#;
        let err = parse(text, LabelMode::Multiclass).unwrap_err();
        assert!(matches!(err, Error::Invariant { ref table, .. } if table == "t"));
        assert!(parse(text, LabelMode::Multilabel).is_ok());
    }

    #[test]
    fn relation_subject_defaults_to_zero() {
        let c = parse(
            r#"{"id":"t","columns":[["x"],["y"]],"relations":[{"obj":1,"labels":["r"]}]}"#,
            LabelMode::Multiclass,
        )
        .unwrap();
        assert_eq!(c.relation_annotations()[0].subject_index, 0);
    }

    #[test]
    fn unannotated_columns_are_skipped() {
        let c = parse(
            r#"{"id":"t","columns":[["x"],["y"]],"types":[[],["b"]]}"#,
            LabelMode::Multiclass,
        )
        .unwrap();
        assert_eq!(c.type_annotations().len(), 1);
        assert_eq!(c.type_annotations()[0].column_index, 1);
    }
}
