//! Second-pass N-best rescoring: an LSTM LM trained on in-domain text
//! re-ranks first-pass hypotheses whose acoustic scores disagree with the
//! language evidence.
//!
//! Run with: cargo run --example rescore_hypotheses

use asrkit::lm::{rescore_nbest, train_rnnlm, NBestHyp, RnnLm, RnnLmConfig, BOS, EOS, LM_UNK};
use asrkit::tensor::AdamConfig;

fn main() -> asrkit::Result<()> {
    // the in-domain text strongly prefers the pattern "abab..."
    let corpus: Vec<Vec<String>> = (0..40)
        .map(|i| {
            let len = 2 + i % 3;
            "ab".chars().cycle().take(2 * len).map(|c| c.to_string()).collect()
        })
        .collect();
    let mut tokens = vec![BOS.to_string(), EOS.to_string(), LM_UNK.to_string()];
    tokens.extend(["a".to_string(), "b".to_string()]);
    let mut lm = RnnLm::new(tokens, RnnLmConfig::desk(), 21)?;
    train_rnnlm(&mut lm, &corpus, &corpus[..4], 6, &AdamConfig::default(), 2)?;

    // first pass narrowly prefers the implausible string
    let hyps = vec![
        NBestHyp {
            utt_id: "utt1".into(),
            rank: 1,
            text: "abba".into(),
            acoustic: -4.10,
            firstpass_lm: -2.8,
        },
        NBestHyp {
            utt_id: "utt1".into(),
            rank: 2,
            text: "abab".into(),
            acoustic: -4.25,
            firstpass_lm: -3.0,
        },
    ];

    for weight in [0.0, 0.5] {
        let rescored = rescore_nbest(&hyps, &lm, weight)?;
        println!("rescoring weight {}:", weight);
        for (rank, r) in rescored.iter().enumerate() {
            println!(
                "  {}. \"{}\"  score {:8.4}  (acoustic {:.2}, lstm {:8.4})",
                rank + 1,
                r.hyp.text,
                r.score,
                r.hyp.acoustic,
                r.rnn_log_prob
            );
        }
    }
    println!("weight 0 keeps the first-pass order; weight 0.5 lets the LSTM flip it");
    Ok(())
}
