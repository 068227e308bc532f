//! Column type and column relation annotation with table-wise Transformer encodings.
//!
//! A table is serialized into a single token sequence with one `[CLS]` marker per
//! column, encoded with a from-scratch Transformer, and the `[CLS]` outputs feed a
//! type head (one column) and a relation head (a concatenated column pair). Both
//! heads share the encoder and are trained by alternating tasks epoch by epoch.
//!
//! Module map:
//!
//! * [`corpus`]: tables, annotations, JSONL ingestion, splits, synthetic benchmark.
//! * [`tokenizer`]: word-level tokenizer and vocabulary with reserved ids.
//! * [`serializer`]: single-column, column-pair, and whole-table sequences.
//! * [`encoder`]: Transformer encoder with exact reverse-mode gradients.
//! * [`annotator`]: task heads, losses, and label decisions.
//! * [`trainer`]: multi-task fine-tuning, masked-token pretraining, checkpoint selection.
//! * [`metrics`]: P/R/F1, clustering scores, pseudo-perplexity.
//! * [`analysis`]: attention dependency matrix, embeddings, k-means, sweeps.
//! * [`pipeline`]: experiment configuration and end-to-end train/evaluate runs.

pub mod analysis;
pub mod annotator;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
mod error;
pub mod metrics;
pub mod pipeline;
pub mod serializer;
pub mod tokenizer;
pub mod trainer;
pub(crate) mod util;

pub use error::{Error, Result};
