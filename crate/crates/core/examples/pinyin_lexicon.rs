//! Parses pinyin syllables into initial/final units with the tone carried
//! on the final, the decomposition used for lexicon bookkeeping.
//!
//! Run with: cargo run --example pinyin_lexicon

use asrkit::text::{normalize_transcript, parse_pinyin};

fn main() -> asrkit::Result<()> {
    // "v" stands in for the umlaut vowel, as in common lexicon formats
    for syllable in ["ma1", "zhong1", "xve2", "er2", "ang4", "lv4"] {
        let entry = parse_pinyin(syllable)?;
        println!(
            "{:8} -> initial {:4} final {:6} tone {}",
            syllable,
            if entry.initial.is_empty() { "-" } else { &entry.initial },
            entry.final_,
            entry.tone
        );
    }

    let messy = " 你好 ， 世界！ABC  ";
    println!(
        "\nnormalize {:?} -> {:?}",
        messy,
        normalize_transcript(messy, "<unk>")
    );
    Ok(())
}
