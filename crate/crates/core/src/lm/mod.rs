//! Language modelling: Witten-Bell backoff n-grams with ARPA
//! serialization, perplexity-minimizing linear interpolation, an LSTM
//! model for second-pass rescoring, and the shallow-fusion adapter used
//! by the beam search.

mod arpa;
mod ngram;
mod rnn;

pub use arpa::{read_arpa, write_arpa};
pub use ngram::{
    interpolate, perplexity, train_ngram, GramEntry, InterpolatedLm, NGramModel, BOS, EOS, LM_UNK,
};
pub use rnn::{train_rnnlm, RnnLm, RnnLmConfig};

use crate::decode::LmScorer;
use crate::error::Result;
use crate::text::{Vocabulary, SOS_EOS_ID};

/// N-gram conditional usable through either a single backoff model or an
/// interpolated mixture.
pub enum CharLm<'a> {
    NGram(&'a NGramModel),
    Mixture(&'a InterpolatedLm),
}

impl CharLm<'_> {
    fn base(&self) -> &NGramModel {
        match self {
            CharLm::NGram(m) => m,
            CharLm::Mixture(m) => &m.components[0],
        }
    }

    fn log10_cond(&self, history: &[usize], w: usize) -> f64 {
        match self {
            CharLm::NGram(m) => m.log10_cond(history, w),
            CharLm::Mixture(m) => m.log10_cond(history, w),
        }
    }
}

/// Adapts a character n-gram to the decoder's vocabulary id space for
/// shallow fusion: histories arrive as recognizer token ids and scores
/// leave in natural log.
pub struct NgramFusion<'a> {
    lm: CharLm<'a>,
    /// recognizer vocabulary id -> LM id
    map: Vec<usize>,
    bos: usize,
    eos: usize,
}

impl<'a> NgramFusion<'a> {
    pub fn new(lm: CharLm<'a>, vocab: &Vocabulary) -> Self {
        let base = lm.base();
        let map: Vec<usize> = (0..vocab.len())
            .map(|id| {
                if id == SOS_EOS_ID {
                    base.eos_id()
                } else {
                    base.token_id(vocab.token(id))
                }
            })
            .collect();
        let (bos, eos) = (base.bos_id(), base.eos_id());
        NgramFusion { lm, map, bos, eos }
    }
}

impl LmScorer for NgramFusion<'_> {
    fn log_prob(&self, history: &[usize], token: usize) -> f64 {
        let mut hist = vec![self.bos];
        hist.extend(history.iter().map(|&t| self.map[t]));
        let w = if token == SOS_EOS_ID {
            self.eos
        } else {
            self.map[token]
        };
        self.lm.log10_cond(&hist, w) * std::f64::consts::LN_10
    }
}

/// One first-pass hypothesis as read back from the decoder output:
/// `acoustic` is the LM-free part of the combined score and
/// `firstpass_lm` the fused n-gram contribution, both natural log.
#[derive(Debug, Clone)]
pub struct NBestHyp {
    pub utt_id: String,
    pub rank: usize,
    pub text: String,
    pub acoustic: f64,
    pub firstpass_lm: f64,
}

#[derive(Debug, Clone)]
pub struct RescoredHyp {
    pub hyp: NBestHyp,
    pub rnn_log_prob: f64,
    pub score: f64,
}

/// Second-pass rescoring: score = acoustic + (1 - weight) * firstpass_lm
/// + weight * rnn log-probability; stable descending re-sort.
pub fn rescore_nbest(hyps: &[NBestHyp], lm: &RnnLm, weight: f64) -> Result<Vec<RescoredHyp>> {
    let mut out = Vec::with_capacity(hyps.len());
    for h in hyps {
        let sentence: Vec<String> = h.text.chars().map(|c| c.to_string()).collect();
        let (log10, _) = lm.sentence_log10(&sentence)?;
        let rnn = log10 * std::f64::consts::LN_10;
        out.push(RescoredHyp {
            score: h.acoustic + (1.0 - weight) * h.firstpass_lm + weight * rnn,
            rnn_log_prob: rnn,
            hyp: h.clone(),
        });
    }
    out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    Ok(out)
}
