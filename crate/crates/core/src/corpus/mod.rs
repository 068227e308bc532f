//! Tables, column annotations, and the corpora that hold them.
//!
//! Annotations live beside the tables rather than inside them, so one table set can
//! carry type labels and relation labels at the same time.

mod jsonl;
mod split;
pub mod synthetic;
mod vocab;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use jsonl::{load_corpus, parse_corpus, save_corpus, write_corpus};
pub use split::{split_corpus, Splits};
pub use synthetic::{generate_bigram_corpus, generate_synthetic_corpus, generate_with_roles, ColumnRole, SyntheticCorpus, SyntheticSpec};
pub use vocab::{build_label_vocabulary, LabelKind, LabelVocabulary};

use crate::{Error, Result};

/// Whether each annotated item carries exactly one label or any non-empty set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    #[default]
    Multiclass,
    Multilabel,
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiclass" => Ok(LabelMode::Multiclass),
            "multilabel" => Ok(LabelMode::Multilabel),
            other => Err(Error::Config(format!(
                "unknown label mode `{other}` (expected multiclass or multilabel)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub values: Vec<String>,
}

impl Column {
    pub fn new<S: Into<String>>(values: impl IntoIterator<Item = S>) -> Self {
        Column {
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    pub columns: Vec<Column>,
    pub headers: Option<Vec<String>>,
}

impl Table {
    /// Builds a table, checking that it has at least one column, that no column is
    /// empty, and that headers (when given) match the column count.
    pub fn new(
        id: impl Into<String>,
        columns: Vec<Column>,
        headers: Option<Vec<String>>,
    ) -> Result<Self> {
        let table = Table {
            id: id.into(),
            columns,
            headers,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::invariant(&self.id, "table has no columns"));
        }
        if let Some(j) = self.columns.iter().position(Column::is_empty) {
            return Err(Error::invariant(
                &self.id,
                format!("column {j} has no cell values"),
            ));
        }
        if let Some(headers) = &self.headers {
            if headers.len() != self.columns.len() {
                return Err(Error::invariant(
                    &self.id,
                    format!(
                        "{} headers for {} columns",
                        headers.len(),
                        self.columns.len()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn header(&self, column: usize) -> Option<&str> {
        self.headers
            .as_ref()
            .and_then(|h| h.get(column))
            .map(String::as_str)
    }

    /// A new table containing only the given columns, in the given order.
    pub fn project(&self, columns: &[usize]) -> Table {
        Table {
            id: self.id.clone(),
            columns: columns.iter().map(|&j| self.columns[j].clone()).collect(),
            headers: self
                .headers
                .as_ref()
                .map(|h| columns.iter().map(|&j| h[j].clone()).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeAnnotation {
    pub table_id: String,
    pub column_index: usize,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationAnnotation {
    pub table_id: String,
    pub subject_index: usize,
    pub object_index: usize,
    pub labels: Vec<usize>,
}

/// Tables plus their type and relation annotations over two label vocabularies.
///
/// Annotations are kept in table order, and within a table in column (or pair
/// declaration) order. Subsets produced by splitting share the parent's vocabularies
/// so label ids stay comparable.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    tables: Vec<Table>,
    type_annotations: Vec<TypeAnnotation>,
    relation_annotations: Vec<RelationAnnotation>,
    type_vocab: LabelVocabulary,
    relation_vocab: LabelVocabulary,
    table_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(
        tables: Vec<Table>,
        type_annotations: Vec<TypeAnnotation>,
        relation_annotations: Vec<RelationAnnotation>,
        type_vocab: LabelVocabulary,
        relation_vocab: LabelVocabulary,
    ) -> Result<Self> {
        let mut table_index = HashMap::with_capacity(tables.len());
        for (i, table) in tables.iter().enumerate() {
            table.validate()?;
            if table_index.insert(table.id.clone(), i).is_some() {
                return Err(Error::invariant(&table.id, "duplicate table id"));
            }
        }

        let mut seen = HashSet::new();
        for ann in &type_annotations {
            let table = lookup(&table_index, &tables, &ann.table_id)?;
            if ann.column_index >= table.num_columns() {
                return Err(Error::invariant(
                    &ann.table_id,
                    format!("type annotation on missing column {}", ann.column_index),
                ));
            }
            if !seen.insert((ann.table_id.as_str(), ann.column_index)) {
                return Err(Error::invariant(
                    &ann.table_id,
                    format!("duplicate type annotation on column {}", ann.column_index),
                ));
            }
            check_labels(&ann.table_id, &ann.labels, &type_vocab)?;
        }
        for ann in &relation_annotations {
            let table = lookup(&table_index, &tables, &ann.table_id)?;
            if ann.subject_index == ann.object_index {
                return Err(Error::invariant(&ann.table_id, "subject equals object"));
            }
            for idx in [ann.subject_index, ann.object_index] {
                if idx >= table.num_columns() {
                    return Err(Error::invariant(
                        &ann.table_id,
                        format!("relation references missing column {idx}"),
                    ));
                }
            }
            check_labels(&ann.table_id, &ann.labels, &relation_vocab)?;
        }

        Ok(Corpus {
            tables,
            type_annotations,
            relation_annotations,
            type_vocab,
            relation_vocab,
            table_index,
        })
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn type_annotations(&self) -> &[TypeAnnotation] {
        &self.type_annotations
    }

    pub fn relation_annotations(&self) -> &[RelationAnnotation] {
        &self.relation_annotations
    }

    pub fn type_vocab(&self) -> &LabelVocabulary {
        &self.type_vocab
    }

    pub fn relation_vocab(&self) -> &LabelVocabulary {
        &self.relation_vocab
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn table(&self, id: &str) -> Option<&Table> {
        self.table_index.get(id).map(|&i| &self.tables[i])
    }

    /// Type annotations of one table, in column order.
    pub fn types_of<'a>(&'a self, table_id: &'a str) -> impl Iterator<Item = &'a TypeAnnotation> {
        self.type_annotations
            .iter()
            .filter(move |a| a.table_id == table_id)
    }

    pub fn relations_of<'a>(
        &'a self,
        table_id: &'a str,
    ) -> impl Iterator<Item = &'a RelationAnnotation> {
        self.relation_annotations
            .iter()
            .filter(move |a| a.table_id == table_id)
    }

    /// Annotations grouped per table, aligned with [`Corpus::tables`].
    pub fn grouped(&self) -> Vec<(&Table, Vec<&TypeAnnotation>, Vec<&RelationAnnotation>)> {
        let mut types: Vec<Vec<&TypeAnnotation>> = vec![Vec::new(); self.tables.len()];
        let mut rels: Vec<Vec<&RelationAnnotation>> = vec![Vec::new(); self.tables.len()];
        for a in &self.type_annotations {
            types[self.table_index[&a.table_id]].push(a);
        }
        for a in &self.relation_annotations {
            rels[self.table_index[&a.table_id]].push(a);
        }
        self.tables
            .iter()
            .zip(types)
            .zip(rels)
            .map(|((t, ty), re)| (t, ty, re))
            .collect()
    }

    /// The sub-corpus made of the tables at `indices` (kept in the given order),
    /// with their annotations and the parent's vocabularies.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        let keep: HashSet<&str> = indices.iter().map(|&i| self.tables[i].id.as_str()).collect();
        let tables: Vec<Table> = indices.iter().map(|&i| self.tables[i].clone()).collect();
        let table_index = tables
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect::<HashMap<_, _>>();
        let mut type_annotations: Vec<TypeAnnotation> = self
            .type_annotations
            .iter()
            .filter(|a| keep.contains(a.table_id.as_str()))
            .cloned()
            .collect();
        let mut relation_annotations: Vec<RelationAnnotation> = self
            .relation_annotations
            .iter()
            .filter(|a| keep.contains(a.table_id.as_str()))
            .cloned()
            .collect();
        type_annotations.sort_by_key(|a| table_index[&a.table_id]);
        relation_annotations.sort_by_key(|a| table_index[&a.table_id]);
        Corpus {
            tables,
            type_annotations,
            relation_annotations,
            type_vocab: self.type_vocab.clone(),
            relation_vocab: self.relation_vocab.clone(),
            table_index,
        }
    }

    /// Replaces tables and annotations wholesale, re-validating against the
    /// current vocabularies.
    pub fn with_contents(
        &self,
        tables: Vec<Table>,
        type_annotations: Vec<TypeAnnotation>,
        relation_annotations: Vec<RelationAnnotation>,
    ) -> Result<Corpus> {
        Corpus::new(
            tables,
            type_annotations,
            relation_annotations,
            self.type_vocab.clone(),
            self.relation_vocab.clone(),
        )
    }

    /// Checks label cardinality against a label mode.
    pub fn check_mode(&self, types: LabelMode, relations: LabelMode) -> Result<()> {
        if types == LabelMode::Multiclass {
            if let Some(a) = self.type_annotations.iter().find(|a| a.labels.len() != 1) {
                return Err(Error::invariant(
                    &a.table_id,
                    format!(
                        "column {} has {} type labels in multiclass mode",
                        a.column_index,
                        a.labels.len()
                    ),
                ));
            }
        }
        if relations == LabelMode::Multiclass {
            if let Some(a) = self.relation_annotations.iter().find(|a| a.labels.len() != 1) {
                return Err(Error::invariant(
                    &a.table_id,
                    format!(
                        "relation ({}, {}) has {} labels in multiclass mode",
                        a.subject_index,
                        a.object_index,
                        a.labels.len()
                    ),
                ));
            }
        }
        Ok(())
    }
}

fn lookup<'a>(index: &HashMap<String, usize>, tables: &'a [Table], id: &str) -> Result<&'a Table> {
    index
        .get(id)
        .map(|&i| &tables[i])
        .ok_or_else(|| Error::invariant(id, "annotation references an unknown table"))
}

fn check_labels(table: &str, labels: &[usize], vocab: &LabelVocabulary) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::invariant(table, "empty label set"));
    }
    let mut seen = HashSet::new();
    for &l in labels {
        if l >= vocab.len() {
            return Err(Error::invariant(
                table,
                format!("label id {l} outside the {} vocabulary", vocab.kind()),
            ));
        }
        if !seen.insert(l) {
            return Err(Error::invariant(table, format!("duplicate label id {l}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[&str]) -> Column {
        Column::new(v.iter().copied())
    }

    #[test]
    fn table_rejects_empty_column_and_header_mismatch() {
        assert!(Table::new("t", vec![], None).is_err());
        assert!(Table::new("t", vec![col(&[])], None).is_err());
        let err = Table::new("t", vec![col(&["a"])], Some(vec![])).unwrap_err();
        assert!(err.to_string().contains("headers"));
        assert!(Table::new("t", vec![col(&[""])], None).is_ok());
    }

    #[test]
    fn project_keeps_headers_aligned() {
        let t = Table::new(
            "t",
            vec![col(&["a"]), col(&["b"]), col(&["c"])],
            Some(vec!["x".into(), "y".into(), "z".into()]),
        )
        .unwrap();
        let p = t.project(&[2, 0]);
        assert_eq!(p.columns, vec![col(&["c"]), col(&["a"])]);
        assert_eq!(p.headers.unwrap(), vec!["z".to_string(), "x".to_string()]);
    }

    #[test]
    fn corpus_rejects_bad_annotations() {
        let t = Table::new("t", vec![col(&["a"]), col(&["b"])], None).unwrap();
        let types = LabelVocabulary::from_names(LabelKind::Type, ["p"]).unwrap();
        let rels = LabelVocabulary::from_names(LabelKind::Relation, ["r"]).unwrap();
        let bad_rel = RelationAnnotation {
            table_id: "t".into(),
            subject_index: 1,
            object_index: 1,
            labels: vec![0],
        };
        let err = Corpus::new(vec![t.clone()], vec![], vec![bad_rel], types.clone(), rels.clone())
            .unwrap_err();
        assert!(err.to_string().contains("subject equals object"));

        let dup = TypeAnnotation {
            table_id: "t".into(),
            column_index: 0,
            labels: vec![0],
        };
        assert!(Corpus::new(
            vec![t.clone()],
            vec![dup.clone(), dup.clone()],
            vec![],
            types.clone(),
            rels.clone()
        )
        .is_err());

        let out_of_range = TypeAnnotation {
            column_index: 5,
            ..dup
        };
        assert!(Corpus::new(vec![t], vec![out_of_range], vec![], types, rels).is_err());
    }
}
