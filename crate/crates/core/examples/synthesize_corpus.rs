//! Generates a miniature synthetic corpus (adult set A, child sets C1/C2)
//! and prints its manifest summary.
//!
//! Run with: cargo run --example synthesize_corpus

use asrkit::frontend::{generate_corpus, CorpusConfig, SetConfig};
use asrkit::text::Subset;

fn main() -> asrkit::Result<()> {
    let out = std::env::temp_dir().join("asrkit_example_corpus");
    let set = |speakers, utts| SetConfig {
        speakers,
        utts_per_speaker: utts,
        min_tokens: 3,
        max_tokens: 6,
    };
    let config = CorpusConfig {
        out_dir: out.clone(),
        set_a: set(4, 3),
        set_c1: set(3, 2),
        set_c2: set(3, 2),
        noise_floor: 0.002,
        seed: 7,
    };

    let manifest = generate_corpus(&config)?;
    println!("wrote {} utterances under {}", manifest.len(), out.display());
    for subset in Subset::all() {
        let sub = manifest.filter(|r| r.subset == subset);
        println!(
            "  set {}: {} speakers, {} utterances",
            subset,
            sub.speakers().len(),
            sub.len()
        );
    }
    println!("\nfirst records:");
    for rec in manifest.records().iter().take(5) {
        println!(
            "  {}  spk={}  \"{}\"  ({})",
            rec.utt_id, rec.speaker_id, rec.transcript, rec.audio_path
        );
    }
    Ok(())
}
