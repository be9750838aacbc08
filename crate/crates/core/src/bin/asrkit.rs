use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asrkit::pipeline::{
    run_decode, run_gen_corpus, run_prep, run_reproduce, run_rescore, run_score, run_train,
    run_train_lm, run_transfer, with_workers, PipelineConfig, Preset,
};

/// Desk-scale child speech recognition pipeline.
#[derive(Parser)]
#[command(name = "asrkit", version, about)]
struct Cli {
    /// Pipeline configuration file (plain `key = value` lines).
    #[arg(long)]
    config: PathBuf,

    /// Override the master seed from the config file.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the worker-thread count (0 uses all cores).
    #[arg(long)]
    workers: Option<usize>,

    /// Override the model size preset.
    #[arg(long, value_parser = ["desk", "paper"])]
    preset: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the adult and child corpora.
    GenCorpus,
    /// Extract features, build the vocabulary, partition and augment.
    Prep,
    /// Train a recognizer from scratch on `train.set`.
    Train,
    /// Retrain the adult recognizer on the child training set.
    Transfer,
    /// Build the n-gram and LSTM language models.
    TrainLm,
    /// Beam-decode the child test set with `decode.model`.
    Decode,
    /// Re-rank the first-pass N-best lists with the LSTM LM.
    Rescore,
    /// Score the configured hypothesis file against the references.
    Score,
    /// Run the whole pipeline and emit the comparison tables.
    Reproduce,
}

fn run(cli: &Cli) -> asrkit::Result<()> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if let Some(preset) = &cli.preset {
        cfg.preset = Preset::parse(preset)?;
    }
    cfg.validate()?;
    let workers = cfg.workers;
    with_workers(workers, move || match cli.command {
        Command::GenCorpus => run_gen_corpus(&cfg),
        Command::Prep => run_prep(&cfg),
        Command::Train => run_train(&cfg),
        Command::Transfer => run_transfer(&cfg),
        Command::TrainLm => run_train_lm(&cfg),
        Command::Decode => run_decode(&cfg),
        Command::Rescore => run_rescore(&cfg),
        Command::Score => run_score(&cfg).map(|_| ()),
        Command::Reproduce => run_reproduce(&cfg),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error\t{}", e);
            ExitCode::FAILURE
        }
    }
}
