//! `colannot`: batch entry points for data generation, training, evaluation, and analyses.

mod args;
mod commands;
mod failure;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::args::GlobalArgs;
use crate::commands::*;
use crate::failure::Failure;
use crate::manifest::RunManifest;

/// Column type and relation annotation with table-wise Transformer encodings.
///
/// Outputs default to `$COLANNOT_OUT_ROOT/<command>` (or `runs/<command>`). Every run
/// writes a JSON manifest next to its outputs, on success and on failure. Exit codes:
/// 0 success, 1 runtime failure, 2 bad usage, 3 invalid configuration.
#[derive(Parser, Debug)]
#[command(name = "colannot", version = manifest::ARTIFACT_VERSION)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus as JSONL
    GenData(GenDataArgs),
    /// Build a token vocabulary from a corpus
    BuildVocab(BuildVocabArgs),
    /// Pretrain an encoder with masked-token prediction
    Pretrain(PretrainArgs),
    /// Train type and relation heads jointly and evaluate on the test split
    Train(TrainCmdArgs),
    /// Score predictions against gold labels, or a model against a corpus
    Eval(EvalArgs),
    /// Write one JSONL prediction per annotated column and column pair
    Predict(PredictArgs),
    /// Write contextualized column embeddings as JSONL
    Embed(EmbedArgs),
    /// Cluster column embeddings with k-means and score against gold types
    Cluster(ClusterArgs),
    /// Compute the inter-column attention dependency matrix
    AnalyzeAttention(AnalyzeArgs),
    /// Train and evaluate once per per-column token budget
    SweepBudget(SweepBudgetArgs),
    /// Learning curve over nested training subsets
    SweepFraction(SweepFractionArgs),
    /// Compare training on original and shuffled tables
    ShuffleTest(ShuffleArgs),
}

/// Where a command's outputs live, which fixes where its manifest goes.
pub enum Output {
    Dir(PathBuf),
    File(PathBuf),
}

impl Output {
    fn manifest_path(&self) -> PathBuf {
        match self {
            Output::Dir(d) => d.join("manifest.json"),
            Output::File(f) => {
                let mut name = f.file_name().map(|n| n.to_os_string()).unwrap_or_default();
                name.push(".manifest.json");
                f.with_file_name(name)
            }
        }
    }
}

pub fn out_root() -> PathBuf {
    std::env::var_os("COLANNOT_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::BuildVocab(_) => "build-vocab",
            Command::Pretrain(_) => "pretrain",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Predict(_) => "predict",
            Command::Embed(_) => "embed",
            Command::Cluster(_) => "cluster",
            Command::AnalyzeAttention(_) => "analyze-attention",
            Command::SweepBudget(_) => "sweep-budget",
            Command::SweepFraction(_) => "sweep-fraction",
            Command::ShuffleTest(_) => "shuffle-test",
        }
    }

    fn output(&self) -> Output {
        let root = out_root().join(self.name());
        match self {
            Command::GenData(a) => Output::File(a.out.clone().unwrap_or_else(|| root.join("data.jsonl"))),
            Command::BuildVocab(a) => Output::File(a.out.clone().unwrap_or_else(|| root.join("vocab.txt"))),
            Command::Predict(a) => Output::File(a.out.clone().unwrap_or_else(|| root.join("predictions.jsonl"))),
            Command::Embed(a) => Output::File(a.out.clone().unwrap_or_else(|| root.join("embeddings.jsonl"))),
            Command::Pretrain(a) => Output::Dir(a.out.clone().unwrap_or(root)),
            Command::Train(a) => Output::Dir(a.out.clone().unwrap_or(root)),
            Command::Eval(a) => Output::Dir(a.out.clone().unwrap_or(root)),
            Command::Cluster(a) => Output::Dir(a.out.clone().unwrap_or(root)),
            Command::AnalyzeAttention(a) => Output::Dir(a.out.clone().unwrap_or(root)),
            Command::SweepBudget(a) => Output::Dir(a.sweep.out.clone().unwrap_or(root)),
            Command::SweepFraction(a) => Output::Dir(a.sweep.out.clone().unwrap_or(root)),
            Command::ShuffleTest(a) => Output::Dir(a.sweep.out.clone().unwrap_or(root)),
        }
    }

    fn run(&self, global: &GlobalArgs, out: &Output, m: &mut RunManifest) -> Result<(), Failure> {
        let (Output::Dir(path) | Output::File(path)) = out;
        match self {
            Command::GenData(a) => gen_data(a, global, path, m),
            Command::BuildVocab(a) => build_vocab(a, global, path, m),
            Command::Pretrain(a) => pretrain(a, global, path, m),
            Command::Train(a) => train(a, global, path, m),
            Command::Eval(a) => eval(a, global, path, m),
            Command::Predict(a) => predict(a, global, path, m),
            Command::Embed(a) => embed(a, global, path, m),
            Command::Cluster(a) => cluster(a, global, path, m),
            Command::AnalyzeAttention(a) => analyze_attention(a, global, path, m),
            Command::SweepBudget(a) => sweep_budget(a, global, path, m),
            Command::SweepFraction(a) => sweep_fraction(a, global, path, m),
            Command::ShuffleTest(a) => shuffle_test(a, global, path, m),
        }
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let mut manifest = RunManifest::new(cli.command.name(), argv, cli.global.workers);
    let out = cli.command.output();
    let outcome = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.workers.max(1))
        .build_global()
        .map_err(|e| Failure::Runtime(format!("cannot start worker pool: {e}")))
        .and_then(|()| cli.command.run(&cli.global, &out, &mut manifest));
    manifest.finish(&outcome);
    let manifest_path = out.manifest_path();
    let written = manifest.write(&manifest_path);

    let outcome = match (outcome, written) {
        (Err(f), _) => Err(f),
        (Ok(()), Err(e)) => Err(Failure::Runtime(format!(
            "cannot write manifest {}: {e}",
            manifest_path.display()
        ))),
        (Ok(()), Ok(())) => Ok(()),
    };
    if let Err(f) = outcome {
        let line = serde_json::json!({
            "status": "error",
            "kind": f.kind(),
            "exit_code": f.exit_code(),
            "message": f.message(),
        });
        eprintln!("{line}");
        std::process::exit(f.exit_code());
    }
}
