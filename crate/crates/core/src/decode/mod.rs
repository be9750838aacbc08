//! Joint CTC-attention beam-search decoding with optional shallow LM
//! fusion, plus the greedy CTC decoder used as a training-time monitor.

use std::fmt::Write as _;
use std::path::Path;

use crate::ctc::{
    collapse_path, prefix_complete, prefix_extend, prefix_initial, PosteriorGrid, PrefixState,
    BLANK,
};
use crate::error::{Error, Result};
use crate::frontend::{extract_features, Waveform};
use crate::model::{eval_ctc_logits, eval_decoder_logprobs, eval_encode, ModelConfig};
use crate::tensor::{ParamStore, Tensor};
use crate::text::{Manifest, TokenSequence, Vocabulary, SOS_EOS_ID};

/// Per-frame argmax (ties toward the lowest token id) followed by path
/// collapse.
pub fn greedy_ctc_decode(grid: &PosteriorGrid) -> TokenSequence {
    let mut path = Vec::with_capacity(grid.num_frames());
    for t in 0..grid.num_frames() {
        let mut best = 0;
        for c in 1..=grid.num_labels() {
            if grid.lp(t, c) > grid.lp(t, best) {
                best = c;
            }
        }
        path.push(best);
    }
    collapse_path(&path)
}

/// Character-level language model usable during beam search. Token ids are
/// vocabulary ids; `SOS_EOS_ID` queries the end-of-sentence probability.
pub trait LmScorer {
    /// Natural-log probability of `token` following `history`.
    fn log_prob(&self, history: &[usize], token: usize) -> f64;
}

/// Uniform distribution over `vocab_size - 1` events (every non-blank
/// token plus end of sentence); useful as a constant-shift reference.
pub struct UniformLm {
    pub vocab_size: usize,
}

impl LmScorer for UniformLm {
    fn log_prob(&self, _history: &[usize], _token: usize) -> f64 {
        -((self.vocab_size - 1) as f64).ln()
    }
}

/// Attention-decoder interface for the beam: log-softmax over the
/// vocabulary for the next position given an emitted prefix.
pub trait AttentionScorer {
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

/// The trained Transformer decoder over a precomputed encoder output.
pub struct ModelAttention<'a> {
    pub params: &'a ParamStore,
    pub config: &'a ModelConfig,
    pub hidden: Tensor,
}

impl AttentionScorer for ModelAttention<'_> {
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        eval_decoder_logprobs(self.params, self.config, &self.hidden, prefix)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecodeConfig {
    pub beam_width: usize,
    /// CTC weight alpha in [0, 1]; the attention score carries 1 - alpha.
    pub ctc_weight: f64,
    /// Shallow-fusion LM weight beta >= 0.
    pub lm_weight: f64,
    /// Length cap as a multiple of the encoded frame count.
    pub max_len_ratio: f64,
    pub nbest: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 50,
            ctc_weight: 0.3,
            lm_weight: 0.0,
            max_len_ratio: 1.0,
            nbest: 50,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 || self.nbest == 0 || self.nbest > self.beam_width {
            return Err(Error::Config {
                key: "beam".into(),
                message: format!(
                    "need 1 <= nbest ({}) <= beam_width ({})",
                    self.nbest, self.beam_width
                ),
            });
        }
        if !(0.0..=1.0).contains(&self.ctc_weight) || self.lm_weight < 0.0 {
            return Err(Error::Config {
                key: "weights".into(),
                message: format!(
                    "ctc_weight {} must be in [0,1], lm_weight {} >= 0",
                    self.ctc_weight, self.lm_weight
                ),
            });
        }
        if self.max_len_ratio <= 0.0 {
            return Err(Error::Config {
                key: "max_len_ratio".into(),
                message: "length ratio must be positive".into(),
            });
        }
        Ok(())
    }
}

/// One finished (or length-capped) decoding result with its score
/// decomposition: combined = alpha * ctc + (1 - alpha) * att + beta * lm.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: TokenSequence,
    pub combined: f64,
    pub ctc: f64,
    pub att: f64,
    pub lm: f64,
    pub finished: bool,
}

struct Beam {
    tokens: TokenSequence,
    state: PrefixState,
    att: f64,
    lm: f64,
}

fn combine(cfg: &DecodeConfig, ctc: f64, att: f64, lm: f64) -> f64 {
    // zero-weight components are skipped so a -inf score under weight 0
    // cannot poison the sum
    let mut s = 0.0;
    if cfg.ctc_weight > 0.0 {
        s += cfg.ctc_weight * ctc;
    }
    if cfg.ctc_weight < 1.0 {
        s += (1.0 - cfg.ctc_weight) * att;
    }
    if cfg.lm_weight > 0.0 {
        s += cfg.lm_weight * lm;
    }
    s
}

/// Length-synchronous joint beam search over a CTC posterior grid and an
/// attention scorer, with optional shallow LM fusion. Returns up to nbest
/// finished hypotheses, best first; if nothing finishes within the length
/// cap the best unfinished hypotheses are returned flagged.
pub fn beam_search(
    grid: &PosteriorGrid,
    attention: &dyn AttentionScorer,
    lm: Option<&dyn LmScorer>,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    let vocab = grid.num_labels() + 1;
    let max_len = ((grid.num_frames() as f64 * cfg.max_len_ratio).ceil() as usize).max(1);
    let lm_lp = |history: &[usize], token: usize| -> f64 {
        lm.map_or(0.0, |m| m.log_prob(history, token))
    };

    let mut live = vec![Beam {
        tokens: Vec::new(),
        state: prefix_initial(grid),
        att: 0.0,
        lm: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut best_unfinished: Option<Hypothesis> = None;

    // a candidate either terminates its prefix with eos or extends it
    struct Cand {
        beam: Beam,
        terminal: bool,
        ctc: f64,
        combined: f64,
    }

    let terminal_cand = |hyp: &Beam, att_row: &[f64], lm_lp: f64| -> Option<Cand> {
        let ctc_done = prefix_complete(grid, &hyp.state);
        if ctc_done == f64::NEG_INFINITY && cfg.ctc_weight > 0.0 {
            return None;
        }
        let att_done = hyp.att + att_row[SOS_EOS_ID];
        let lm_done = hyp.lm + lm_lp;
        Some(Cand {
            combined: combine(cfg, ctc_done, att_done, lm_done),
            ctc: ctc_done,
            terminal: true,
            beam: Beam {
                tokens: hyp.tokens.clone(),
                state: hyp.state.clone(),
                att: att_done,
                lm: lm_done,
            },
        })
    };

    let mut step = 0;
    while !live.is_empty() {
        let last_step = step == max_len;
        let mut candidates: Vec<Cand> = Vec::new();
        for hyp in &live {
            let att_row = attention.next_log_probs(&hyp.tokens)?;
            if att_row.len() != vocab {
                return Err(Error::Dimension(format!(
                    "attention scorer returned {} probabilities for vocab {}",
                    att_row.len(),
                    vocab
                )));
            }
            candidates.extend(terminal_cand(hyp, &att_row, lm_lp(&hyp.tokens, SOS_EOS_ID)));
            if last_step {
                continue; // length cap: eos only
            }
            for c in 1..vocab {
                if c == SOS_EOS_ID || c == BLANK {
                    continue;
                }
                let state = prefix_extend(grid, &hyp.state, c)?;
                if state.score() == f64::NEG_INFINITY && cfg.ctc_weight > 0.0 {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(c);
                let att = hyp.att + att_row[c];
                let lm = hyp.lm + lm_lp(&hyp.tokens, c);
                candidates.push(Cand {
                    combined: combine(cfg, state.score(), att, lm),
                    ctc: state.score(),
                    terminal: false,
                    beam: Beam {
                        tokens,
                        state,
                        att,
                        lm,
                    },
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.combined
                .partial_cmp(&a.combined)
                .unwrap()
                .then_with(|| a.beam.tokens.cmp(&b.beam.tokens))
                .then_with(|| a.terminal.cmp(&b.terminal))
        });
        candidates.truncate(cfg.beam_width);
        live = Vec::new();
        for cand in candidates {
            if cand.terminal {
                finished.push(Hypothesis {
                    tokens: cand.beam.tokens,
                    combined: cand.combined,
                    ctc: cand.ctc,
                    att: cand.beam.att,
                    lm: cand.beam.lm,
                    finished: true,
                });
            } else {
                if best_unfinished
                    .as_ref()
                    .map_or(true, |b| cand.combined > b.combined)
                {
                    best_unfinished = Some(Hypothesis {
                        tokens: cand.beam.tokens.clone(),
                        combined: cand.combined,
                        ctc: cand.ctc,
                        att: cand.beam.att,
                        lm: cand.beam.lm,
                        finished: false,
                    });
                }
                live.push(cand.beam);
            }
        }
        if last_step {
            break;
        }
        step += 1;
    }

    finished.sort_by(|a, b| {
        b.combined
            .partial_cmp(&a.combined)
            .unwrap()
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    finished.dedup_by(|a, b| a.tokens == b.tokens);
    finished.truncate(cfg.nbest);
    if finished.is_empty() {
        // no hypothesis could finish within the length cap: flag the best
        // unfinished prefix instead of failing
        return Ok(best_unfinished.into_iter().collect());
    }
    Ok(finished)
}

/// Decodes every manifest utterance and writes an N-best hypothesis file:
/// utt_id, rank, combined, ctc, att, lm, text (tab-separated). Failures on
/// individual utterances are reported on stderr and skipped.
#[allow(clippy::too_many_arguments)]
pub fn decode_corpus(
    manifest: &Manifest,
    root: &Path,
    params: &ParamStore,
    config: &ModelConfig,
    vocab: &Vocabulary,
    lm: Option<&dyn LmScorer>,
    cfg: &DecodeConfig,
    out_path: &Path,
) -> Result<()> {
    let mut out = String::from("utt_id\trank\tcombined\tctc\tatt\tlm\ttext\n");
    for rec in manifest.records() {
        let decoded = (|| -> Result<Vec<Hypothesis>> {
            let wave = Waveform::load(&root.join(&rec.audio_path))?;
            let feats = extract_features(&wave, &rec.utt_id)?;
            let hidden = eval_encode(params, config, &feats.frames)?;
            let logits = eval_ctc_logits(params, config, &feats.frames)?;
            let grid = PosteriorGrid::from_logits(&logits)?;
            let attention = ModelAttention {
                params,
                config,
                hidden,
            };
            beam_search(&grid, &attention, lm, cfg)
        })();
        match decoded {
            Ok(hyps) => {
                for (rank, h) in hyps.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                        rec.utt_id,
                        rank + 1,
                        h.combined,
                        h.ctc,
                        h.att,
                        h.lm,
                        vocab.detokenize(&h.tokens)
                    );
                }
            }
            Err(e) => eprintln!("decode failed for `{}`: {}", rec.utt_id, e),
        }
    }
    std::fs::write(out_path, out)?;
    Ok(())
}

/// Best hypothesis text per utterance from a written hypothesis file.
pub fn read_best_hypotheses(
    path: &Path,
) -> Result<std::collections::BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut best = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 7 columns, found {}", cols.len()),
            });
        }
        if cols[1] == "1" {
            best.insert(cols[0].to_string(), cols[6].to_string());
        }
    }
    Ok(best)
}
