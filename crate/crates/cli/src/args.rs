//! Argument groups shared by several subcommands and their merge into an
//! [`ExperimentConfig`].

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use colannot::annotator::TaskKind;
use colannot::corpus::LabelMode;
use colannot::pipeline::ExperimentConfig;
use colannot::trainer::InputScheme;

use crate::failure::Failure;

#[derive(Args, Clone, Debug)]
pub struct GlobalArgs {
    /// Seed for every random choice; overrides `seed` in the config file [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel-safe stages such as per-position perplexity
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    /// Flat TOML experiment config; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Encoder architecture, serialization, and vocabulary settings.
#[derive(Args, Clone, Debug, Default)]
pub struct ArchArgs {
    /// Encoder layers [default: 2]
    #[arg(long)]
    pub num_layers: Option<usize>,

    /// Attention heads per layer [default: 4]
    #[arg(long)]
    pub num_heads: Option<usize>,

    /// Hidden width [default: 64]
    #[arg(long)]
    pub d_model: Option<usize>,

    /// Feed-forward width [default: 256]
    #[arg(long)]
    pub d_ff: Option<usize>,

    /// Maximum sequence length in tokens [default: 512]
    #[arg(long)]
    pub max_seq_len: Option<usize>,

    /// Dropout rate during training [default: 0.1]
    #[arg(long)]
    pub dropout: Option<f64>,

    /// Token budget per column [default: 32]
    #[arg(long = "budget")]
    pub max_tokens_per_column: Option<usize>,

    /// Prepend column headers to column values [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub include_metadata: Option<bool>,

    /// Vocabulary size including the five reserved tokens [default: 30000]
    #[arg(long)]
    pub vocab_max_size: Option<usize>,

    /// Minimum token frequency for the vocabulary [default: 1]
    #[arg(long)]
    pub vocab_min_freq: Option<usize>,
}

/// Fine-tuning settings.
#[derive(Args, Clone, Debug, Default)]
pub struct TrainArgs {
    /// Training epochs per task [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Peak learning rate, decayed linearly to zero [default: 5e-5]
    #[arg(long)]
    pub lr: Option<f64>,

    /// Tables per optimizer step [default: 16]
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Global gradient norm clip [default: off]
    #[arg(long)]
    pub clip_norm: Option<f64>,

    /// Multi-label decision threshold [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Comma-separated tasks in training order: type, relation [default: type,relation]
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,

    /// Input scheme: table or single-column [default: table]
    #[arg(long)]
    pub scheme: Option<String>,

    /// Type label mode: multiclass or multilabel [default: multiclass]
    #[arg(long)]
    pub type_mode: Option<String>,

    /// Relation label mode: multiclass or multilabel [default: multiclass]
    #[arg(long)]
    pub relation_mode: Option<String>,

    /// Train,valid,test fractions used when splitting one corpus [default: 0.8,0.1,0.1]
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub split: Option<Vec<f64>>,
}

fn parsed<T: FromStr>(value: &Option<String>, what: &str) -> Result<Option<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    value
        .as_deref()
        .map(|s| s.parse::<T>().map_err(|e| Failure::Config(format!("--{what}: {e}"))))
        .transpose()
}

impl ArchArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(num_layers, num_heads, d_model, d_ff, max_seq_len, dropout, max_tokens_per_column, include_metadata, vocab_max_size, vocab_min_freq);
    }
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), Failure> {
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if self.clip_norm.is_some() {
            cfg.clip_norm = self.clip_norm;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(names) = &self.tasks {
            cfg.tasks = names
                .iter()
                .map(|n| n.parse::<TaskKind>().map_err(|e| Failure::Config(format!("--tasks: {e}"))))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = parsed::<InputScheme>(&self.scheme, "scheme")? {
            cfg.scheme = v;
        }
        if let Some(v) = parsed::<LabelMode>(&self.type_mode, "type-mode")? {
            cfg.type_mode = v;
        }
        if let Some(v) = parsed::<LabelMode>(&self.relation_mode, "relation-mode")? {
            cfg.relation_mode = v;
        }
        if let Some(f) = &self.split {
            let [train, valid, test] = f[..] else {
                return Err(Failure::Config(format!("--split needs three fractions, got {}", f.len())));
            };
            cfg.train_fraction = train;
            cfg.valid_fraction = valid;
            cfg.test_fraction = test;
        }
        Ok(())
    }
}

/// Config file (if any), then the global seed. Flag groups are applied by callers.
pub fn base_config(global: &GlobalArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
            ExperimentConfig::from_toml_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn finish_config(cfg: ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}
