use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Type,
    Relation,
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelKind::Type => f.write_str("type"),
            LabelKind::Relation => f.write_str("relation"),
        }
    }
}

/// Dense bijection between label names and ids `0..len`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelVocabularyRepr", into = "LabelVocabularyRepr")]
pub struct LabelVocabulary {
    kind: LabelKind,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct LabelVocabularyRepr {
    kind: LabelKind,
    names: Vec<String>,
}

impl TryFrom<LabelVocabularyRepr> for LabelVocabulary {
    type Error = Error;

    fn try_from(r: LabelVocabularyRepr) -> Result<Self> {
        LabelVocabulary::from_names(r.kind, r.names)
    }
}

impl From<LabelVocabulary> for LabelVocabularyRepr {
    fn from(v: LabelVocabulary) -> Self {
        LabelVocabularyRepr {
            kind: v.kind,
            names: v.names,
        }
    }
}

impl LabelVocabulary {
    pub fn empty(kind: LabelKind) -> Self {
        LabelVocabulary {
            kind,
            names: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_names<S: Into<String>>(
        kind: LabelKind,
        names: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let mut vocab = LabelVocabulary::empty(kind);
        for name in names {
            let name = name.into();
            if vocab.index.contains_key(&name) {
                return Err(Error::Config(format!("duplicate {kind} label `{name}`")));
            }
            vocab.intern(&name);
        }
        Ok(vocab)
    }

    /// Returns the id of `name`, appending it when unseen.
    pub(crate) fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Rebuilds the vocabulary of one annotation kind from the labels actually used in
/// `corpus`, in order of first appearance.
pub fn build_label_vocabulary(corpus: &Corpus, kind: LabelKind) -> Result<LabelVocabulary> {
    let (source, used): (&LabelVocabulary, Vec<&[usize]>) = match kind {
        LabelKind::Type => (
            corpus.type_vocab(),
            corpus
                .type_annotations()
                .iter()
                .map(|a| a.labels.as_slice())
                .collect(),
        ),
        LabelKind::Relation => (
            corpus.relation_vocab(),
            corpus
                .relation_annotations()
                .iter()
                .map(|a| a.labels.as_slice())
                .collect(),
        ),
    };
    if used.is_empty() {
        return Err(Error::EmptyInput(format!("corpus has no {kind} annotations")));
    }
    let mut vocab = LabelVocabulary::empty(kind);
    for &id in used.iter().flat_map(|labels| labels.iter()) {
        let name = source.name(id).expect("annotation ids validated on construction");
        vocab.intern(name);
    }
    Ok(vocab)
}
