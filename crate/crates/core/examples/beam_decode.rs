//! Joint beam search over a CTC posterior grid with an attention scorer
//! and shallow n-gram fusion, showing the combined-score decomposition
//! of the N-best list.
//!
//! Run with: cargo run --example beam_decode

use asrkit::decode::{beam_search, AttentionScorer, DecodeConfig};
use asrkit::lm::{train_ngram, CharLm, NgramFusion};
use asrkit::tensor::Tensor;
use asrkit::text::{Vocabulary, SOS_EOS_ID};

/// A fixed attention preference: favors "ab" endings over everything else.
struct ToyAttention {
    vocab: usize,
}

impl AttentionScorer for ToyAttention {
    fn next_log_probs(&self, prefix: &[usize]) -> asrkit::Result<Vec<f64>> {
        let mut probs = vec![0.05; self.vocab];
        let favored = match prefix.len() {
            0 => 3,          // "a"
            1 => 4,          // then "b"
            _ => SOS_EOS_ID, // then stop
        };
        probs[favored] = 0.8;
        let z: f64 = probs.iter().sum();
        Ok(probs.iter().map(|p| (p / z).ln()).collect())
    }
}

fn main() -> asrkit::Result<()> {
    let vocab = Vocabulary::from_tokens(["a".to_string(), "b".to_string()]);

    // a 4-frame grid over {blank, unk, sos/eos, a, b} leaning toward "ab"
    let rows: [[f64; 5]; 4] = [
        [0.10, 0.01, 0.01, 0.78, 0.10],
        [0.58, 0.01, 0.01, 0.20, 0.20],
        [0.10, 0.01, 0.01, 0.08, 0.80],
        [0.68, 0.01, 0.01, 0.10, 0.20],
    ];
    let log_probs: Vec<f64> = rows.iter().flatten().map(|p| p.ln()).collect();
    let grid = asrkit::ctc::PosteriorGrid::new(Tensor::from_vec(&[4, 5], log_probs)?)?;
    let attention = ToyAttention { vocab: 5 };

    let lm = train_ngram(
        &[
            vec!["a".into(), "b".into()],
            vec!["b".into(), "a".into()],
            vec!["a".into(), "b".into()],
        ],
        2,
        &["a".to_string(), "b".to_string()],
    )?;
    let fusion = NgramFusion::new(CharLm::NGram(&lm), &vocab);

    let cfg = DecodeConfig {
        beam_width: 8,
        ctc_weight: 0.3,
        lm_weight: 0.2,
        max_len_ratio: 1.0,
        nbest: 4,
    };
    let hyps = beam_search(&grid, &attention, Some(&fusion), &cfg)?;

    println!("combined = 0.3*ctc + 0.7*att + 0.2*lm");
    println!("rank  text  combined      ctc      att       lm");
    for (rank, h) in hyps.iter().enumerate() {
        println!(
            "{:4}  {:4}  {:8.4} {:8.4} {:8.4} {:8.4}",
            rank + 1,
            vocab.detokenize(&h.tokens),
            h.combined,
            h.ctc,
            h.att,
            h.lm
        );
    }
    Ok(())
}
