//! `lstm-distill` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lstm_distill::importance::Method;

#[derive(Debug, Parser)]
#[command(name = "lstm-distill", version, about = "Train LSTM classifiers, score word importance and distill them into phrase rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus.
    Synth(SynthArgs),
    /// Train a classifier on a `label<TAB>text` corpus.
    Train(TrainArgs),
    /// Report classifier accuracy.
    Eval(EvalArgs),
    /// Per-word importance scores as TSV, HTML or ANSI.
    Importance(ImportanceArgs),
    /// Mine a ranked phrase-pattern list.
    Extract(ExtractArgs),
    /// Evaluate the first-match rules classifier built from a pattern list.
    Rules(RulesArgs),
    /// Train the question-conditioned reader.
    QaTrain(QaTrainArgs),
    /// Mine per-relation answer patterns.
    QaExtract(QaExtractArgs),
    /// Answer questions with the reader and, optionally, with mined patterns.
    QaAnswer(QaAnswerArgs),
    /// Check the decomposition, gradient and phrase-score identities.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Sentiment,
    Qa,
}

#[derive(Debug, Args)]
struct SynthArgs {
    kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of documents (sentiment).
    #[arg(long, default_value_t = 1000)]
    docs: usize,
    /// Number of planted phrases (sentiment).
    #[arg(long, default_value_t = 10)]
    phrases: usize,
    /// Number of movies (qa).
    #[arg(long, default_value_t = 500)]
    movies: usize,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the planted phrases (sentiment).
    #[arg(long)]
    planted: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Hyper {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Word embedding width.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    /// Fraction of the data held out for early stopping when no dev file is given.
    #[arg(long, default_value_t = 0.2)]
    dev_fraction: f64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Tsv,
    Html,
    Ansi,
}

#[derive(Debug, Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    /// Corpus TSV, or QA TSV for a reader model.
    #[arg(long)]
    data: PathBuf,
    /// 0-based document (or question) index.
    #[arg(long, default_value_t = 0)]
    doc: usize,
    #[arg(long, default_value = "gamma")]
    method: Method,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    format: OutputFormat,
    /// Class whose heat is rendered; defaults to the predicted class.
    #[arg(long)]
    class: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Mining {
    #[arg(long, default_value = "gamma")]
    method: Method,
    #[arg(long, default_value_t = 1.1)]
    threshold: f64,
    #[arg(long, default_value_t = 5)]
    max_len: usize,
    #[arg(long, default_value_t = 3)]
    min_support: usize,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    mining: Mining,
}

#[derive(Debug, Args)]
struct RulesArgs {
    /// Supplies the vocabulary and the network predictions for agreement.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Per-document TSV report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QaTrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Non-answer entity occurrences sampled per question.
    #[arg(long, default_value_t = 10)]
    negatives: usize,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct QaExtractArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// One `<relation>.tsv` pattern file per question relation is written here.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    mining: Mining,
}

#[derive(Debug, Args)]
struct QaAnswerArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Directory of pattern files from `qa-extract`.
    #[arg(long)]
    patterns_dir: Option<PathBuf>,
    /// Print each answer.
    #[arg(long)]
    show: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
