//! Character error rate scoring: edit-distance decomposition on single
//! pairs and a pooled corpus report with per-speaker breakdown.
//!
//! Run with: cargo run --example score_cer

use std::collections::BTreeMap;

use asrkit::score::{edit_distance, score_corpus};
use asrkit::text::{Manifest, ManifestRecord, Subset};

fn main() -> asrkit::Result<()> {
    println!("pairwise edit distances:");
    for (reference, hyp) in [("cat", "cut"), ("kitten", "sitting"), ("abc", "abc")] {
        let r: Vec<char> = reference.chars().collect();
        let h: Vec<char> = hyp.chars().collect();
        let c = edit_distance(&r, &h);
        println!(
            "  \"{}\" vs \"{}\": S={} I={} D={}  CER {:.1}%",
            reference,
            hyp,
            c.sub,
            c.ins,
            c.del,
            100.0 * c.cer()
        );
    }

    // a two-speaker corpus where one speaker is harder than the other
    let mut manifest = Manifest::new();
    let mut hyps: BTreeMap<String, String> = BTreeMap::new();
    let data = [
        ("u1", "spk_a", "你好", "你好"),
        ("u2", "spk_a", "一二三四", "一二三四"),
        ("u3", "spk_b", "五六七八", "五六八"),
        ("u4", "spk_b", "九十", "九一"),
    ];
    for (utt, spk, reference, hyp) in data {
        manifest.push(ManifestRecord {
            utt_id: utt.into(),
            audio_path: format!("{}.f64", utt),
            speaker_id: spk.into(),
            subset: Subset::C1,
            transcript: reference.into(),
        })?;
        hyps.insert(utt.into(), hyp.into());
    }

    let report = score_corpus(&manifest, &hyps, "<unk>", false)?;
    println!("\n{}", report.render_text());
    Ok(())
}
