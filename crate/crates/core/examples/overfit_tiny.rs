//! Trains the desk-sized joint CTC-attention model on a handful of
//! synthetic utterances until it overfits them, then reports the
//! training-set greedy CER per epoch.
//!
//! Run with: cargo run --release --example overfit_tiny

use asrkit::frontend::{
    child_profile, default_recipes, extract_features, synthesize_utterance, SynthesisSpec,
};
use asrkit::model::{evaluate, init_params, train, ModelConfig, TrainConfig, Utterance};
use asrkit::tensor::rng::rng_from_seed;
use asrkit::text::{Vocabulary, SOS_EOS_ID};
use rand::Rng;

fn main() -> asrkit::Result<()> {
    // ten utterances from one child speaker over a 6-character inventory
    let inventory: Vec<char> = "一二三四五六".chars().collect();
    let vocab = Vocabulary::from_tokens(inventory.iter().map(|c| c.to_string()));
    let mut rng = rng_from_seed(3);
    let spec = SynthesisSpec {
        recipes: default_recipes(&(0..inventory.len()).collect::<Vec<_>>()),
        speaker: child_profile(&mut rng, false),
        noise_floor: 0.002,
        silence_s: 0.05,
        sample_rate: 16000,
    };
    let mut set = Vec::new();
    for u in 0..10 {
        let len = rng.gen_range(2..=4);
        let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..inventory.len())).collect();
        let wave = synthesize_utterance(&ids, &spec, 1000 + u)?;
        let feats = extract_features(&wave, &format!("utt{:02}", u))?;
        // recognizer token ids offset past the three specials
        let tokens = ids.iter().map(|&t| t + SOS_EOS_ID + 1).collect();
        set.push(Utterance { feats, tokens });
    }

    let config = ModelConfig::desk(vocab.len(), set[0].feats.dim());
    let mut params = init_params(&config, 1)?;
    let tc = TrainConfig::quick(100, 12);

    // validate on the training set itself: the point is to overfit
    let stats = train(&mut params, &config, &tc, &set, &set)?;
    println!("epoch  train_loss  train_greedy_cer");
    for s in stats.iter().filter(|s| s.epoch % 10 == 0 || s.epoch == 1) {
        println!("{:5}  {:10.4}  {:15.1}%", s.epoch, s.train_loss, 100.0 * s.valid_cer);
    }
    let (loss, cer) = evaluate(&params, &config, &set, tc.lambda)?;
    println!(
        "final: eval loss {:.4}, training-set greedy CER {:.1}%",
        loss,
        100.0 * cer
    );
    Ok(())
}
