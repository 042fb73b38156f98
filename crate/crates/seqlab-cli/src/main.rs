//! `seqlab`: train, run, and evaluate sequence-labeling models from the
//! command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data-format or I/O error,
//! 3 numeric failure.

mod commands;
mod report;
mod runmanifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use seqlab::corpus::{SeqUnit, SynthProfile};
use seqlab::{CellKind, Error, GateVariant};

#[derive(Parser)]
#[command(name = "seqlab", version, about = "Sequence labeling toolkit: bidirectional RNN/LSTM/GRU taggers and linear-chain CRF baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it with a reproducibility manifest.
    Train(TrainArgs),
    /// Tag a CoNLL file with a trained model.
    Predict(PredictArgs),
    /// Entity-level micro-averaged evaluation of predictions against gold.
    Evaluate(EvaluateArgs),
    /// k-fold cross-validation: train and evaluate per fold, pool counts.
    Crossval(CrossvalArgs),
    /// Check analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Train skip-gram word embeddings on plain text.
    EmbedTrain(EmbedTrainArgs),
    /// Generate a deterministic synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arch {
    Rnn,
    Lstm,
    Gru,
    Crf,
    CrfNocontext,
}

impl Arch {
    fn name(self) -> &'static str {
        match self {
            Arch::Rnn => "rnn",
            Arch::Lstm => "lstm",
            Arch::Gru => "gru",
            Arch::Crf => "crf",
            Arch::CrfNocontext => "crf-nocontext",
        }
    }

    fn cell_kind(self) -> Option<CellKind> {
        match self {
            Arch::Rnn => Some(CellKind::Rnn),
            Arch::Lstm => Some(CellKind::Lstm),
            Arch::Gru => Some(CellKind::Gru),
            Arch::Crf | Arch::CrfNocontext => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Paper,
    Standard,
}

impl From<VariantArg> for GateVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Paper => GateVariant::Paper,
            VariantArg::Standard => GateVariant::Standard,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SeqUnitArg {
    Sentence,
    Document,
}

impl From<SeqUnitArg> for SeqUnit {
    fn from(v: SeqUnitArg) -> Self {
        match v {
            SeqUnitArg::Sentence => SeqUnit::Sentence,
            SeqUnitArg::Document => SeqUnit::Document,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Model architecture.
    #[arg(long, value_enum)]
    arch: Arch,
    /// Training corpus (CoNLL: token<TAB>tag).
    #[arg(long)]
    train: PathBuf,
    /// Pretrained embeddings in word2vec text format; sets the embedding
    /// dimension and initializes covered rows.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Hidden size per direction (recurrent models).
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    /// Embedding dimension when no --embeddings file is given.
    #[arg(long, default_value_t = 200)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Seed; falls back to $SEQLAB_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Sequence granularity: one sentence or one whole document per chain.
    #[arg(long, value_enum, default_value = "sentence")]
    seq_unit: SeqUnitArg,
    /// Gate-activation variant (recurrent models).
    #[arg(long, value_enum, default_value = "paper")]
    variant: VariantArg,
    /// Add bias terms to the LSTM gates.
    #[arg(long, default_value_t = false)]
    use_bias: bool,
    /// Clip the global gradient norm (recurrent models).
    #[arg(long)]
    clip_norm: Option<f64>,
    /// L2 regularization strength (CRF models).
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    /// Output model path; the binary sidecar lands at <out>.bin and the
    /// run manifest at <out>.run.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input CoNLL file; its tags are ignored.
    #[arg(long)]
    input: PathBuf,
    /// Output CoNLL file with predicted tags.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Emit the metrics document as JSON instead of the text report.
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct CrossvalArgs {
    #[arg(long, value_enum)]
    arch: Arch,
    /// Corpus to split at document granularity.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    #[arg(long, default_value_t = 200)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "sentence")]
    seq_unit: SeqUnitArg,
    #[arg(long, value_enum, default_value = "paper")]
    variant: VariantArg,
    #[arg(long, default_value_t = false)]
    use_bias: bool,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Architecture to check; all of them when omitted.
    #[arg(long, value_enum)]
    arch: Option<Arch>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds per configuration.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
}

#[derive(Args)]
struct EmbedTrainArgs {
    /// Plain text: one sentence per line, whitespace-tokenized.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 200)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (word2vec text format).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus profile: `local` (labels readable off each token) or
    /// `longdep` (labels set by a trigger 4-8 positions earlier).
    #[arg(long)]
    profile: String,
    #[arg(long)]
    sentences: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Seed resolution order: flag, SEQLAB_SEED, 42.
fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("SEQLAB_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(42)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Crossval(args) => commands::crossval(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
        Command::EmbedTrain(args) => commands::embed_train(args),
        Command::Synth(args) => commands::synth(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Contract(_) | Error::EmptyInput(_) => 1,
                Error::DataFormat { .. } | Error::Io(_) => 2,
                Error::Numeric { .. } => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn parse_profile(s: &str) -> Result<SynthProfile, Error> {
    s.parse()
}
