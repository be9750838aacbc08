//! Drives the whole pipeline programmatically at miniature scale:
//! corpus synthesis, preparation, the three training strategies,
//! language models, decoding, rescoring and the final result tables.
//! The same flow is available from the command line via the `asrkit`
//! binary's `reproduce` subcommand.
//!
//! Run with: cargo run --release --example full_pipeline

use asrkit::pipeline::{run_reproduce, Layout, PipelineConfig};

fn main() -> asrkit::Result<()> {
    let mut cfg = PipelineConfig::default();
    cfg.root = std::env::temp_dir().join("asrkit_example_pipeline");
    cfg.seed = 23;
    // shrink the corpus and schedules so the run finishes in seconds
    cfg.corpus.speakers_a = 4;
    cfg.corpus.utts_a = 3;
    cfg.corpus.speakers_c1 = 3;
    cfg.corpus.utts_c1 = 2;
    cfg.corpus.speakers_c2 = 3;
    cfg.corpus.utts_c2 = 2;
    cfg.corpus.min_tokens = 2;
    cfg.corpus.max_tokens = 4;
    cfg.train.epochs = 2;
    cfg.transfer_epochs = 2;
    cfg.lm.rnn_epochs = 2;
    cfg.decode.beam = 4;
    cfg.decode.nbest = 2;

    run_reproduce(&cfg)?;

    let lay = Layout::new(&cfg);
    println!("{}", std::fs::read_to_string(lay.results_path())?);
    println!("artifacts under {}", cfg.root.display());
    Ok(())
}
