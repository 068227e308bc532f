//! JSON checkpoints holding named tensors plus everything needed to rebuild inputs.
//!
//! Floats are written with round-trip precision, so a save/load cycle restores
//! every parameter bit for bit.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotator::{AnnotationModel, DenseHead};
use crate::corpus::{LabelKind, LabelMode, LabelVocabulary};
use crate::encoder::{EncoderConfig, EncoderParams, Parameters};
use crate::serializer::SerializerConfig;
use crate::tokenizer::TokenVocabulary;
use crate::trainer::{InputEncoding, InputScheme};
use crate::util::write_atomic;
use crate::{Error, Result};

const FORMAT: &str = "colannot-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    encoder: EncoderConfig,
    serializer: SerializerConfig,
    scheme: InputScheme,
    vocab: TokenVocabulary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heads: Option<HeadsMeta>,
    tensors: BTreeMap<String, TensorRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadsMeta {
    type_mode: LabelMode,
    relation_mode: LabelMode,
    type_labels: Vec<String>,
    relation_labels: Vec<String>,
}

/// A trained annotation model with its label vocabularies and input encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub model: AnnotationModel,
    pub input: InputEncoding,
    pub type_labels: LabelVocabulary,
    pub relation_labels: LabelVocabulary,
}

/// An encoder on its own, as produced by pretraining.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderBundle {
    pub encoder: EncoderParams,
    pub input: InputEncoding,
}

fn collect<P: Parameters + ?Sized>(prefix: &str, p: &P, out: &mut BTreeMap<String, TensorRecord>) {
    for t in p.tensors() {
        out.insert(
            format!("{prefix}{}", t.name),
            TensorRecord {
                shape: t.shape,
                data: t.data.to_vec(),
            },
        );
    }
}

fn restore<P: Parameters + ?Sized>(prefix: &str, p: &mut P, tensors: &BTreeMap<String, TensorRecord>) -> Result<()> {
    let expected: HashMap<String, Vec<usize>> = p
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.shape))
        .collect();
    let mut source = HashMap::new();
    for (name, shape) in &expected {
        let key = format!("{prefix}{name}");
        let rec = tensors
            .get(&key)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
        if &rec.shape != shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{key}` has shape {:?}, expected {shape:?}",
                rec.shape
            )));
        }
        source.insert(name.clone(), rec.data.clone());
    }
    p.load_tensors(&source)
}

fn encoder_file(encoder: &EncoderParams, input: &InputEncoding) -> Result<CheckpointFile> {
    if input.vocab.len() != encoder.config.vocab_size {
        return Err(Error::Shape(format!(
            "vocabulary of {} tokens for an encoder with {} embeddings",
            input.vocab.len(),
            encoder.config.vocab_size
        )));
    }
    let mut tensors = BTreeMap::new();
    collect("encoder.", encoder, &mut tensors);
    Ok(CheckpointFile {
        format: FORMAT.into(),
        version: VERSION,
        encoder: encoder.config.clone(),
        serializer: input.serializer,
        scheme: input.scheme,
        vocab: input.vocab.clone(),
        heads: None,
        tensors,
    })
}

fn parse(text: &str) -> Result<CheckpointFile> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(FORMAT) => {}
        other => {
            return Err(Error::Checkpoint(format!(
                "expected format `{FORMAT}`, found {other:?}"
            )))
        }
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == VERSION as u64 => {}
        other => return Err(Error::Checkpoint(format!("unsupported version {other:?}"))),
    }
    Ok(serde_json::from_value(value)?)
}

fn decode_encoder(file: &CheckpointFile) -> Result<EncoderBundle> {
    file.encoder.validate()?;
    if file.vocab.len() != file.encoder.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocabulary of {} tokens for an encoder with {} embeddings",
            file.vocab.len(),
            file.encoder.vocab_size
        )));
    }
    let mut encoder = EncoderParams::init(&file.encoder)?;
    restore("encoder.", &mut encoder, &file.tensors)?;
    Ok(EncoderBundle {
        encoder,
        input: InputEncoding {
            vocab: file.vocab.clone(),
            serializer: file.serializer,
            scheme: file.scheme,
        },
    })
}

impl EncoderBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&encoder_file(&self.encoder, &self.input)?)?)
    }

    /// Reads the encoder part of any checkpoint, including full model bundles.
    pub fn from_json(text: &str) -> Result<Self> {
        decode_encoder(&parse(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(write_atomic(path.as_ref(), self.to_json()?.as_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl ModelBundle {
    pub fn to_json(&self) -> Result<String> {
        self.model.validate()?;
        let mut file = encoder_file(&self.model.encoder, &self.input)?;
        collect("type_head.", &self.model.type_head, &mut file.tensors);
        collect("relation_head.", &self.model.relation_head, &mut file.tensors);
        file.heads = Some(HeadsMeta {
            type_mode: self.model.type_mode,
            relation_mode: self.model.relation_mode,
            type_labels: self.type_labels.names().to_vec(),
            relation_labels: self.relation_labels.names().to_vec(),
        });
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file = parse(text)?;
        let Some(heads) = &file.heads else {
            return Err(Error::Checkpoint(
                "checkpoint holds an encoder only; train task heads first".into(),
            ));
        };
        let EncoderBundle { encoder, input } = decode_encoder(&file)?;
        let d = encoder.config.d_model;
        let mut type_head = DenseHead::zeros(d, heads.type_labels.len());
        let mut relation_head = DenseHead::zeros(2 * d, heads.relation_labels.len());
        restore("type_head.", &mut type_head, &file.tensors)?;
        restore("relation_head.", &mut relation_head, &file.tensors)?;
        Ok(ModelBundle {
            model: AnnotationModel {
                encoder,
                type_head,
                relation_head,
                type_mode: heads.type_mode,
                relation_mode: heads.relation_mode,
            },
            input,
            type_labels: LabelVocabulary::from_names(LabelKind::Type, heads.type_labels.clone())?,
            relation_labels: LabelVocabulary::from_names(LabelKind::Relation, heads.relation_labels.clone())?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(write_atomic(path.as_ref(), self.to_json()?.as_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn labels(&self, kind: LabelKind) -> &LabelVocabulary {
        match kind {
            LabelKind::Type => &self.type_labels,
            LabelKind::Relation => &self.relation_labels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::TokenVocabulary;

    fn bundle() -> ModelBundle {
        let vocab = TokenVocabulary::with_regular(["a", "b", "c"]).unwrap();
        let cfg = EncoderConfig {
            num_layers: 2,
            num_heads: 2,
            d_model: 4,
            d_ff: 8,
            max_seq_len: 16,
            vocab_size: vocab.len(),
            dropout_rate: 0.1,
            seed: 7,
        };
        ModelBundle {
            model: AnnotationModel::new(
                EncoderParams::init(&cfg).unwrap(),
                3,
                2,
                LabelMode::Multilabel,
                LabelMode::Multiclass,
            ),
            input: InputEncoding {
                vocab,
                serializer: SerializerConfig {
                    max_tokens_per_column: 3,
                    max_seq_len: 16,
                    include_metadata: true,
                },
                scheme: InputScheme::Table,
            },
            type_labels: LabelVocabulary::from_names(LabelKind::Type, ["x", "y", "z"]).unwrap(),
            relation_labels: LabelVocabulary::from_names(LabelKind::Relation, ["p", "q"]).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let mut b = bundle();
        b.model.encoder.layers[1].w2[[3, 1]] = 0.1 + 0.2;
        b.model.type_head.bias[2] = -1.0 / 3.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        b.save(&path).unwrap();
        assert_eq!(ModelBundle::load(&path).unwrap(), b);
        let enc = EncoderBundle::load(&path).unwrap();
        assert_eq!(enc.encoder, b.model.encoder);
    }

    #[test]
    fn encoder_only_checkpoint() {
        let b = bundle();
        let e = EncoderBundle {
            encoder: b.model.encoder.clone(),
            input: b.input.clone(),
        };
        let text = e.to_json().unwrap();
        assert_eq!(EncoderBundle::from_json(&text).unwrap(), e);
        assert!(matches!(ModelBundle::from_json(&text), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn rejects_foreign_and_damaged_files() {
        assert!(ModelBundle::from_json(r#"{"format":"other","version":1}"#).is_err());
        let text = bundle().to_json().unwrap();
        let bumped = text.replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(ModelBundle::from_json(&bumped), Err(Error::Checkpoint(_))));
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["tensors"].as_object_mut().unwrap().remove("type_head.bias");
        assert!(ModelBundle::from_json(&v.to_string()).is_err());
    }
}
