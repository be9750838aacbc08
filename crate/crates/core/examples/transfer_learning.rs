//! Adult-to-child transfer: pretrains on adult speech, retrains all
//! parameters on a small child set, and compares held-out child CER
//! against training on the child data alone.
//!
//! Run with: cargo run --release --example transfer_learning

use asrkit::frontend::{
    adult_profile, child_profile, default_recipes, extract_features, synthesize_utterance,
    SpeakerProfile, SynthesisSpec,
};
use asrkit::model::{
    evaluate, init_params, train, transfer_learn, ModelConfig, TrainConfig, Utterance,
};
use asrkit::tensor::rng::{derive_seed, rng_from_seed};
use asrkit::text::{Vocabulary, SOS_EOS_ID};
use rand::Rng;

const INVENTORY: usize = 6;

fn make_set(speaker: SpeakerProfile, n: usize, seed: u64) -> asrkit::Result<Vec<Utterance>> {
    let spec = SynthesisSpec {
        recipes: default_recipes(&(0..INVENTORY).collect::<Vec<_>>()),
        speaker,
        noise_floor: 0.002,
        silence_s: 0.05,
        sample_rate: 16000,
    };
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for u in 0..n {
        let len = rng.gen_range(2..=4);
        let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..INVENTORY)).collect();
        let wave = synthesize_utterance(&ids, &spec, derive_seed(seed, &format!("u{}", u)))?;
        let feats = extract_features(&wave, &format!("s{}_u{:02}", seed, u))?;
        let tokens = ids.iter().map(|&t| t + SOS_EOS_ID + 1).collect();
        out.push(Utterance { feats, tokens });
    }
    Ok(out)
}

fn main() -> asrkit::Result<()> {
    let vocab = Vocabulary::from_tokens("一二三四五六".chars().map(|c| c.to_string()));
    let mut rng = rng_from_seed(1);
    let adult_train = make_set(adult_profile(&mut rng), 24, 100)?;
    let child_train = make_set(child_profile(&mut rng, false), 6, 200)?;
    let child_test = make_set(child_profile(&mut rng, false), 8, 300)?;

    let config = ModelConfig::desk(vocab.len(), adult_train[0].feats.dim());
    let pretrain = TrainConfig::quick(60, 5);
    let tc = TrainConfig::quick(80, 5);

    // child-only baseline
    let mut child_only = init_params(&config, 11)?;
    train(&mut child_only, &config, &tc, &child_train, &[])?;
    let (_, child_cer) = evaluate(&child_only, &config, &child_test, tc.lambda)?;

    // adult pretraining, then retraining every parameter on child data
    let mut transferred = init_params(&config, 11)?;
    train(&mut transferred, &config, &pretrain, &adult_train, &[])?;
    let (_, adult_cer) = evaluate(&transferred, &config, &child_test, tc.lambda)?;
    transfer_learn(&mut transferred, &config, &tc, &child_train, &[])?;
    let (_, transfer_cer) = evaluate(&transferred, &config, &child_test, tc.lambda)?;

    println!("held-out child greedy CER:");
    println!("  adult only        {:6.1}%", 100.0 * adult_cer);
    println!("  child only        {:6.1}%", 100.0 * child_cer);
    println!("  transfer learning {:6.1}%", 100.0 * transfer_cer);
    Ok(())
}
