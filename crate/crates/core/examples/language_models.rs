//! Character language models: Witten-Bell backoff n-grams with ARPA
//! serialization, perplexity-minimizing interpolation of two components,
//! and an LSTM model trained for a few epochs.
//!
//! Run with: cargo run --example language_models

use asrkit::lm::{
    interpolate, perplexity, read_arpa, train_ngram, train_rnnlm, write_arpa, RnnLm, RnnLmConfig,
    BOS, EOS, LM_UNK,
};
use asrkit::tensor::AdamConfig;

fn sentences(raw: &[&str]) -> Vec<Vec<String>> {
    raw.iter()
        .map(|s| s.chars().map(|c| c.to_string()).collect())
        .collect()
}

fn main() -> asrkit::Result<()> {
    let vocab: Vec<String> = "abcd".chars().map(|c| c.to_string()).collect();
    // two domains with different habits, and a dev set closer to the second
    let formal = sentences(&["abab", "abad", "abcab", "abab", "dcba", "abadd"]);
    let casual = sentences(&["ccd", "cdcd", "ccdd", "dccd", "cdc", "ccdc"]);
    let dev = sentences(&["cdcd", "abcd", "ccdd", "abab"]);

    let formal_lm = train_ngram(&formal, 3, &vocab)?;
    let casual_lm = train_ngram(&casual, 3, &vocab)?;
    println!("dev perplexity:");
    println!("  formal 3-gram  {:8.3}", perplexity(&formal_lm, &dev));
    println!("  casual 3-gram  {:8.3}", perplexity(&casual_lm, &dev));

    let mix = interpolate(vec![formal_lm, casual_lm], &dev)?;
    println!(
        "  interpolated   {:8.3}  (weights {:.2}/{:.2})",
        mix.perplexity(&dev),
        mix.weights[0],
        mix.weights[1]
    );

    // ARPA round trip is the identity
    let dir = std::env::temp_dir().join("asrkit_example_lm");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("formal.arpa");
    write_arpa(&mix.components[0], &path)?;
    let back = read_arpa(&path)?;
    println!(
        "arpa round trip: perplexity {:.6} -> {:.6}",
        perplexity(&mix.components[0], &dev),
        perplexity(&back, &dev)
    );

    // a small LSTM LM on the combined text
    let mut tokens = vec![BOS.to_string(), EOS.to_string(), LM_UNK.to_string()];
    tokens.extend(vocab);
    let mut rnn = RnnLm::new(tokens, RnnLmConfig::desk(), 9)?;
    let mut corpus = formal;
    corpus.extend(casual);
    let history = train_rnnlm(&mut rnn, &corpus, &dev, 8, &AdamConfig::default(), 4)?;
    println!("lstm dev perplexity by epoch:");
    for (epoch, ppl) in history {
        println!("  epoch {}  {:8.3}", epoch, ppl);
    }
    Ok(())
}
