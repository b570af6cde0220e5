mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ki_core::KiError;

/// Knowledge-inheritance pre-training of small transformer language models.
#[derive(Debug, Parser)]
#[command(name = "ki", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a vocabulary and a packed corpus from plain-text files.
    BuildCorpus(BuildCorpusArgs),
    /// Self-learning pre-training (the schedule is forced to self_only).
    Pretrain(TrainArgs),
    /// Run a teacher checkpoint over a corpus and store its top-K distributions.
    PrecomputeLogits(PrecomputeArgs),
    /// Train a student with one or more teacher caches.
    KiTrain(KiTrainArgs),
    /// Train a chain of generations, each inheriting from an earlier one.
    Chain(ChainArgs),
    /// Continue training a model on a new domain.
    Adapt(AdaptArgs),
    /// Validation perplexity of a checkpoint.
    Eval(EvalArgs),
    /// Vocabulary overlap of two corpora.
    Proximity(ProximityArgs),
    /// Merge metrics files into one CSV and an SVG of validation PPL curves.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct BuildCorpusArgs {
    /// Plain-text inputs; blank lines separate documents.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Reuse this vocabulary instead of building one.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Where to write the new vocabulary [default: vocab.txt next to --out].
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    #[arg(long, default_value_t = 8000)]
    vocab_size: usize,
    #[arg(long, default_value_t = 128)]
    seq_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "default")]
    domain: String,
    #[arg(long, default_value_t = 0)]
    id_base: u64,
}

#[derive(Debug, Args)]
struct CorpusArg {
    #[arg(long)]
    corpus: PathBuf,
    /// Vocabulary file [default: vocab.txt next to the corpus].
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    corpus: CorpusArg,
    /// Output directory for metrics.csv and checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Start from this checkpoint.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PrecomputeArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    corpus: CorpusArg,
    #[arg(long)]
    out: PathBuf,
    /// Take tau, k and masking from a run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mask_seed: Option<u64>,
    #[arg(long)]
    mask_rate: Option<f64>,
    /// Only cover sequences of this domain.
    #[arg(long)]
    domain: Option<String>,
}

#[derive(Debug, Args)]
struct KiTrainArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// `[domain=]path`; without a domain the cache serves every domain.
    #[arg(long = "teacher-cache", required = true)]
    teacher_caches: Vec<String>,
}

#[derive(Debug, Args)]
struct ChainArgs {
    /// One run config per generation, smallest first.
    #[arg(long = "generation", required = true)]
    generations: Vec<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArg,
    #[arg(long)]
    out: PathBuf,
    /// `student=teacher` with 1-based generation numbers; teacher 0 means none.
    #[arg(long = "teacher")]
    teachers: Vec<String>,
}

#[derive(Debug, Args)]
struct AdaptArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    corpus: CorpusArg,
    #[arg(long)]
    source_corpus: PathBuf,
    #[arg(long)]
    source_vocab: Option<PathBuf>,
    #[arg(long = "teacher-cache")]
    teacher_caches: Vec<String>,
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    corpus: CorpusArg,
    #[arg(long, default_value_t = 0)]
    mask_seed: u64,
    #[arg(long, default_value_t = 0.15)]
    mask_rate: f64,
}

#[derive(Debug, Args)]
struct ProximityArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    vocab_a: Option<PathBuf>,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    vocab_b: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    top_n: usize,
    /// Whitespace-separated stopword list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// `label=path` of a metrics.csv; repeatable.
    #[arg(long = "metrics", required = true)]
    metrics: Vec<String>,
    #[arg(long)]
    svg: PathBuf,
    #[arg(long)]
    csv: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<KiError>())
        .map_or(1, |k| k.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::BuildCorpus(a) => commands::build_corpus(a),
        Command::Pretrain(a) => commands::pretrain(a),
        Command::PrecomputeLogits(a) => commands::precompute(a),
        Command::KiTrain(a) => commands::ki_train(a),
        Command::Chain(a) => commands::chain(a),
        Command::Adapt(a) => commands::adapt(a),
        Command::Eval(a) => commands::eval(a),
        Command::Proximity(a) => commands::proximity(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
