use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const LM_UNK: &str = "<unk>";

/// Probability / backoff pair in log10, ARPA-style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramEntry {
    pub log10_prob: f64,
    pub log10_bow: f64,
}

/// Backoff n-gram model with Witten-Bell interpolated smoothing. Grams are
/// keyed by internal token ids; the id space is the regular vocabulary
/// plus sentence-begin, sentence-end and unknown.
#[derive(Debug, Clone)]
pub struct NGramModel {
    pub order: usize,
    /// Token strings; ids index this list. `<s>` is never a predicted event.
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
    /// tables[k - 1]: k-gram -> entry, deterministically ordered.
    tables: Vec<BTreeMap<Vec<usize>, GramEntry>>,
}

impl NGramModel {
    pub fn new(tokens: Vec<String>, tables: Vec<BTreeMap<Vec<usize>, GramEntry>>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::Parameter("n-gram model with no tables".into()));
        }
        for special in [BOS, EOS, LM_UNK] {
            if !tokens.iter().any(|t| t == special) {
                return Err(Error::Parameter(format!(
                    "token inventory is missing `{}`",
                    special
                )));
            }
        }
        let lookup = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(NGramModel {
            order: tables.len(),
            tokens,
            lookup,
            tables,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tables(&self) -> &[BTreeMap<Vec<usize>, GramEntry>] {
        &self.tables
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.lookup
            .get(token)
            .copied()
            .unwrap_or_else(|| self.lookup[LM_UNK])
    }

    pub fn bos_id(&self) -> usize {
        self.lookup[BOS]
    }

    pub fn eos_id(&self) -> usize {
        self.lookup[EOS]
    }

    /// log10 P(w | history) under the backoff recursion. The history is
    /// truncated to the model order; unseen histories back off with
    /// weight 1.
    pub fn log10_cond(&self, history: &[usize], w: usize) -> f64 {
        let start = history.len().saturating_sub(self.order - 1);
        let hist = &history[start..];
        self.cond_inner(hist, w)
    }

    fn cond_inner(&self, hist: &[usize], w: usize) -> f64 {
        let mut gram = hist.to_vec();
        gram.push(w);
        if let Some(e) = self.tables[hist.len()].get(&gram) {
            return e.log10_prob;
        }
        if hist.is_empty() {
            // fall through to the unknown token: the unigram table covers
            // the whole inventory, so this only triggers for foreign ids
            return self.tables[0][&vec![self.lookup[LM_UNK]]].log10_prob;
        }
        let bow = self.tables[hist.len() - 1]
            .get(hist)
            .map_or(0.0, |e| e.log10_bow);
        bow + self.cond_inner(&hist[1..], w)
    }

    /// Internal ids of one sentence of surface tokens (OOV -> unknown).
    pub fn encode(&self, sentence: &[String]) -> Vec<usize> {
        sentence.iter().map(|t| self.token_id(t)).collect()
    }

    /// Total log10 probability of a sentence including the sentence-end
    /// event, with begin padding excluded from the event count.
    pub fn sentence_log10(&self, sentence: &[String]) -> (f64, usize) {
        let ids = self.encode(sentence);
        let mut history = vec![self.bos_id(); self.order.saturating_sub(1).max(1)];
        let mut total = 0.0;
        for &w in ids.iter().chain(std::iter::once(&self.eos_id())) {
            total += self.log10_cond(&history, w);
            history.push(w);
        }
        (total, ids.len() + 1)
    }
}

/// Trains a Witten-Bell smoothed model. `vocab` lists the regular surface
/// tokens; sentence-begin/end and unknown are added internally, and corpus
/// tokens outside the vocabulary count as unknown.
pub fn train_ngram(corpus: &[Vec<String>], order: usize, vocab: &[String]) -> Result<NGramModel> {
    if corpus.is_empty() {
        return Err(Error::Training("empty language-model corpus".into()));
    }
    if order == 0 {
        return Err(Error::Parameter("n-gram order must be >= 1".into()));
    }
    let mut tokens = vec![BOS.to_string(), EOS.to_string(), LM_UNK.to_string()];
    for t in vocab {
        if !tokens.contains(t) {
            tokens.push(t.clone());
        }
    }
    let lookup: HashMap<String, usize> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    let bos = lookup[BOS];
    let eos = lookup[EOS];
    let unk = lookup[LM_UNK];

    // raw k-gram counts over <s>-padded sentences; grams ending in <s>
    // are never prediction events and are not counted
    let mut counts: Vec<HashMap<Vec<usize>, usize>> = vec![HashMap::new(); order];
    for sentence in corpus {
        let mut ids = vec![bos; order.saturating_sub(1).max(1)];
        ids.extend(
            sentence
                .iter()
                .map(|t| lookup.get(t).copied().unwrap_or(unk)),
        );
        ids.push(eos);
        let pad = ids.len() - sentence.len() - 1;
        for k in 1..=order {
            for end in pad..ids.len() {
                let start = (end + 1).saturating_sub(k);
                if end + 1 - start < k && k > 1 {
                    continue;
                }
                counts[k - 1]
                    .entry(ids[start..=end].to_vec())
                    .and_modify(|c| *c += 1)
                    .or_insert(1);
            }
        }
    }

    // per-history totals and distinct continuation type counts
    let history_stats = |table: &HashMap<Vec<usize>, usize>| -> HashMap<Vec<usize>, (usize, usize)> {
        let mut m: HashMap<Vec<usize>, (usize, usize)> = HashMap::new();
        for (gram, &c) in table {
            let h = gram[..gram.len() - 1].to_vec();
            let e = m.entry(h).or_insert((0, 0));
            e.0 += c;
            e.1 += 1;
        }
        m
    };

    // event vocabulary: everything predictable (no <s>)
    let v_pred = tokens.len() - 1;
    let mut tables: Vec<BTreeMap<Vec<usize>, GramEntry>> = vec![BTreeMap::new(); order];

    // unigrams: interpolate with the uniform distribution and cover the
    // entire inventory so every token has a probability
    let uni_stats = history_stats(&counts[0]);
    let (n_events, t_types) = uni_stats.get(&vec![]).copied().unwrap_or((0, 0));
    for (id, _) in tokens.iter().enumerate() {
        if id == bos {
            continue;
        }
        let c = counts[0].get(&vec![id]).copied().unwrap_or(0);
        let p = (c as f64 + t_types as f64 / v_pred as f64)
            / (n_events as f64 + t_types as f64);
        tables[0].insert(
            vec![id],
            GramEntry {
                log10_prob: p.log10(),
                log10_bow: 0.0,
            },
        );
    }
    // <s> needs a unigram entry as a backoff anchor; by ARPA convention it
    // carries a tiny probability and a backoff weight
    tables[0].insert(
        vec![bos],
        GramEntry {
            log10_prob: -99.0,
            log10_bow: 0.0,
        },
    );

    for k in 2..=order {
        let stats = history_stats(&counts[k - 1]);
        let grams: Vec<(Vec<usize>, usize)> = {
            let mut g: Vec<_> = counts[k - 1].iter().map(|(g, &c)| (g.clone(), c)).collect();
            g.sort();
            g
        };
        for (gram, c) in grams {
            let h = &gram[..k - 1];
            let w = gram[k - 1];
            let (c_h, t_h) = stats[h];
            let lower = {
                let mut p = 0.0f64;
                // P(w | shortened history) in the linear domain
                let shorter = &h[1..];
                let mut sub = shorter.to_vec();
                sub.push(w);
                if let Some(e) = tables[k - 2].get(&sub) {
                    p = 10f64.powf(e.log10_prob);
                } else if k >= 3 {
                    // reconstruct through the backoff chain
                    let model_view = &tables[..k - 1];
                    p = 10f64.powf(cond_from_tables(model_view, shorter, w, unk));
                }
                p
            };
            let p = (c as f64 + t_h as f64 * lower) / (c_h as f64 + t_h as f64);
            tables[k - 1].insert(
                gram,
                GramEntry {
                    log10_prob: p.log10(),
                    log10_bow: 0.0,
                },
            );
        }
        // backoff weights live on the (k-1)-gram histories:
        // bow(h) = T(h) / (c(h) + T(h)) normalizes the conditional exactly
        for (h, &(c_h, t_h)) in &stats {
            let bow = t_h as f64 / (c_h as f64 + t_h as f64);
            if let Some(e) = tables[k - 2].get_mut(h) {
                e.log10_bow = bow.log10();
            } else {
                // histories containing <s> may be absent from the lower
                // table; insert an anchor entry
                tables[k - 2].insert(
                    h.clone(),
                    GramEntry {
                        log10_prob: -99.0,
                        log10_bow: bow.log10(),
                    },
                );
            }
        }
    }

    NGramModel::new(tokens, tables)
}

fn cond_from_tables(
    tables: &[BTreeMap<Vec<usize>, GramEntry>],
    hist: &[usize],
    w: usize,
    unk: usize,
) -> f64 {
    let mut gram = hist.to_vec();
    gram.push(w);
    if let Some(e) = tables[hist.len()].get(&gram) {
        return e.log10_prob;
    }
    if hist.is_empty() {
        return tables[0][&vec![unk]].log10_prob;
    }
    let bow = tables[hist.len() - 1].get(hist).map_or(0.0, |e| e.log10_bow);
    bow + cond_from_tables(tables, &hist[1..], w, unk)
}

/// Per-token perplexity 10^(-mean log10 P), sentence-end included.
pub fn perplexity(lm: &NGramModel, corpus: &[Vec<String>]) -> f64 {
    let mut total = 0.0;
    let mut events = 0usize;
    for s in corpus {
        let (lp, n) = lm.sentence_log10(s);
        total += lp;
        events += n;
    }
    if events == 0 {
        return f64::INFINITY;
    }
    10f64.powf(-total / events as f64)
}

/// Linear mixture of backoff models sharing one token inventory.
#[derive(Debug, Clone)]
pub struct InterpolatedLm {
    pub components: Vec<NGramModel>,
    pub weights: Vec<f64>,
}

impl InterpolatedLm {
    pub fn new(components: Vec<NGramModel>, weights: Vec<f64>) -> Result<Self> {
        if components.len() < 2 || components.len() != weights.len() {
            return Err(Error::Parameter(
                "interpolation needs >= 2 components with matching weights".into(),
            ));
        }
        for c in &components[1..] {
            if c.tokens() != components[0].tokens() {
                return Err(Error::Parameter(
                    "interpolated components must share a vocabulary".into(),
                ));
            }
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "weights must be a simplex vector (sum {})",
                sum
            )));
        }
        Ok(InterpolatedLm {
            components,
            weights,
        })
    }

    pub fn log10_cond(&self, history: &[usize], w: usize) -> f64 {
        let p: f64 = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, wt)| wt * 10f64.powf(c.log10_cond(history, w)))
            .sum();
        p.log10()
    }

    pub fn sentence_log10(&self, sentence: &[String]) -> (f64, usize) {
        let base = &self.components[0];
        let ids = base.encode(sentence);
        let mut history = vec![base.bos_id(); base.order.saturating_sub(1).max(1)];
        let mut total = 0.0;
        for &w in ids.iter().chain(std::iter::once(&base.eos_id())) {
            total += self.log10_cond(&history, w);
            history.push(w);
        }
        (total, ids.len() + 1)
    }

    pub fn perplexity(&self, corpus: &[Vec<String>]) -> f64 {
        let mut total = 0.0;
        let mut events = 0usize;
        for s in corpus {
            let (lp, n) = self.sentence_log10(s);
            total += lp;
            events += n;
        }
        if events == 0 {
            return f64::INFINITY;
        }
        10f64.powf(-total / events as f64)
    }
}

/// Exhaustive simplex grid search (step 0.05, vertices included) for the
/// mixture weights minimizing development-set perplexity.
pub fn interpolate(components: Vec<NGramModel>, dev: &[Vec<String>]) -> Result<InterpolatedLm> {
    const STEPS: usize = 20; // 1 / 0.05
    if components.len() < 2 {
        return Err(Error::Parameter(
            "interpolation needs at least two components".into(),
        ));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut grid: Vec<Vec<usize>> = Vec::new();
    fn fill(prefix: &mut Vec<usize>, remaining: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        if remaining == 1 {
            let mut v = prefix.clone();
            v.push(left);
            out.push(v);
            return;
        }
        for take in 0..=left {
            prefix.push(take);
            fill(prefix, remaining - 1, left - take, out);
            prefix.pop();
        }
    }
    fill(&mut Vec::new(), components.len(), STEPS, &mut grid);
    for point in grid {
        let weights: Vec<f64> = point.iter().map(|&p| p as f64 / STEPS as f64).collect();
        let candidate = InterpolatedLm::new(components.clone(), weights.clone())?;
        let pp = candidate.perplexity(dev);
        let better = match &best {
            None => true,
            Some((b, bw)) => pp < *b - 1e-12 || (pp < *b + 1e-12 && weights < *bw),
        };
        if better {
            best = Some((pp, weights));
        }
    }
    let (_, weights) = best.expect("non-empty grid");
    InterpolatedLm::new(components, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::rng_from_seed;
    use rand::Rng;

    fn sents(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|s| s.chars().map(|c| c.to_string()).collect())
            .collect()
    }

    fn vocab(letters: &str) -> Vec<String> {
        letters.chars().map(|c| c.to_string()).collect()
    }

    #[test]
    fn unigram_normalizes_from_empty_history() {
        let lm = train_ngram(&sents(&["aaa"]), 1, &vocab("ab")).unwrap();
        let mut sum = 0.0;
        for (id, t) in lm.tokens().iter().enumerate() {
            if t == BOS {
                continue;
            }
            sum += 10f64.powf(lm.log10_cond(&[], id));
        }
        assert!((sum - 1.0).abs() < 1e-6, "sum {}", sum);
        // "a" dominates
        let pa = lm.log10_cond(&[], lm.token_id("a"));
        let pb = lm.log10_cond(&[], lm.token_id("b"));
        assert!(pa > pb);
    }

    #[test]
    fn bigram_matches_hand_computed_witten_bell() {
        // corpus {ab, ab, ac}: events following "a" are b,b,c so
        //   c(a) = 3, T(a) = 2, c(ab) = 2
        // unigram events: a,b,</s> twice and a,c,</s> once, so N = 9 with
        //   4 distinct types over a 5-token prediction inventory
        //   P1(b) = (2 + 4/5) / (9 + 4) = 2.8 / 13
        //   P(b|a) = (2 + 2 * P1(b)) / (3 + 2)
        let lm = train_ngram(&sents(&["ab", "ab", "ac"]), 2, &vocab("abc")).unwrap();
        let p1b = 2.8 / 13.0;
        let expect = (2.0 + 2.0 * p1b) / 5.0;
        let got = 10f64.powf(lm.log10_cond(&[lm.token_id("a")], lm.token_id("b")));
        assert!((got - expect).abs() < 1e-12, "{} vs {}", got, expect);
    }

    #[test]
    fn conditionals_normalize_for_every_observed_history() {
        let mut rng = rng_from_seed(31);
        for trial in 0..10 {
            let corpus: Vec<Vec<String>> = (0..12)
                .map(|_| {
                    let len = rng.gen_range(1..6);
                    (0..len)
                        .map(|_| ["a", "b", "c"][rng.gen_range(0..3)].to_string())
                        .collect()
                })
                .collect();
            let lm = train_ngram(&corpus, 3, &vocab("abc")).unwrap();
            // every history appearing in any table
            let mut histories: Vec<Vec<usize>> = vec![vec![]];
            for table in lm.tables() {
                for gram in table.keys() {
                    if gram.len() < lm.order {
                        histories.push(gram.clone());
                    }
                }
            }
            for h in histories {
                let mut sum = 0.0;
                for (id, t) in lm.tokens().iter().enumerate() {
                    if t == BOS {
                        continue;
                    }
                    sum += 10f64.powf(lm.log10_cond(&h, id));
                }
                assert!(
                    (sum - 1.0).abs() < 1e-6,
                    "trial {} history {:?} sums to {}",
                    trial,
                    h,
                    sum
                );
            }
        }
    }

    #[test]
    fn seen_grams_beat_their_backoff_estimate() {
        let mut rng = rng_from_seed(32);
        for _ in 0..20 {
            let corpus: Vec<Vec<String>> = (0..8)
                .map(|_| {
                    let len = rng.gen_range(1..5);
                    (0..len)
                        .map(|_| ["a", "b"][rng.gen_range(0..2)].to_string())
                        .collect()
                })
                .collect();
            let lm = train_ngram(&corpus, 2, &vocab("ab")).unwrap();
            for (gram, e) in &lm.tables()[1] {
                let h = &gram[..1];
                let w = gram[1];
                let bow = lm.tables()[0][h].log10_bow;
                let lower = lm.log10_cond(&[], w);
                assert!(
                    e.log10_prob > bow + lower,
                    "gram {:?}: {} vs {}",
                    gram,
                    e.log10_prob,
                    bow + lower
                );
            }
        }
    }

    #[test]
    fn uniform_unigram_perplexity_is_vocab_size() {
        // hand-built uniform unigram over 5 predictable tokens
        let tokens: Vec<String> = [BOS, EOS, LM_UNK, "a", "b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut t0 = BTreeMap::new();
        for id in 0..tokens.len() {
            let p = if tokens[id] == BOS { -99.0 } else { (1.0f64 / 5.0).log10() };
            t0.insert(vec![id], GramEntry { log10_prob: p, log10_bow: 0.0 });
        }
        let lm = NGramModel::new(tokens, vec![t0]).unwrap();
        let pp = perplexity(&lm, &sents(&["ab", "ba", "a"]));
        assert!((pp - 5.0).abs() < 1e-6, "pp {}", pp);
    }

    #[test]
    fn training_perplexity_beats_uniform() {
        let corpus = sents(&["abab", "abab", "abba"]);
        let lm = train_ngram(&corpus, 2, &vocab("ab")).unwrap();
        let pp = perplexity(&lm, &corpus);
        let uniform = 4.0; // a, b, </s>, <unk> predictable
        assert!(pp < uniform, "pp {}", pp);
    }

    #[test]
    fn deterministic_continuations_have_low_perplexity() {
        // "ab" repeated: bigram memorizes b|a and a|<s> and </s>|b
        let corpus = sents(&["ab"; 50]);
        let lm = train_ngram(&corpus, 2, &vocab("ab")).unwrap();
        let pp = perplexity(&lm, &corpus);
        assert!(pp < 1.2, "pp {}", pp);
    }

    #[test]
    fn oov_tokens_score_as_unknown() {
        let lm = train_ngram(&sents(&["ab"]), 2, &vocab("ab")).unwrap();
        let (lp_z, n) = lm.sentence_log10(&vec!["z".to_string()]);
        let (lp_unk, _) = lm.sentence_log10(&vec![LM_UNK.to_string()]);
        assert_eq!(n, 2);
        assert!((lp_z - lp_unk).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(train_ngram(&[], 2, &vocab("ab")).is_err());
    }

    #[test]
    fn identical_components_interpolate_to_the_same_model() {
        let corpus = sents(&["abab", "bb", "aab"]);
        let lm = train_ngram(&corpus, 2, &vocab("ab")).unwrap();
        let dev = sents(&["ab", "ba"]);
        let single = perplexity(&lm, &dev);
        let mix = InterpolatedLm::new(vec![lm.clone(), lm.clone()], vec![0.35, 0.65]).unwrap();
        assert!((mix.perplexity(&dev) - single).abs() < 1e-9);
    }

    #[test]
    fn grid_search_dominates_every_component() {
        let a = train_ngram(&sents(&["abab", "abba", "aa"]), 2, &vocab("ab")).unwrap();
        let b = train_ngram(&sents(&["bb", "bab", "babb"]), 2, &vocab("ab")).unwrap();
        let dev = sents(&["ab", "bb", "abb"]);
        let mix = interpolate(vec![a.clone(), b.clone()], &dev).unwrap();
        assert!((mix.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let pp = mix.perplexity(&dev);
        assert!(pp <= perplexity(&a, &dev) + 1e-9);
        assert!(pp <= perplexity(&b, &dev) + 1e-9);
    }

    #[test]
    fn interpolated_probability_is_a_convex_combination() {
        let a = train_ngram(&sents(&["abab", "aa"]), 2, &vocab("ab")).unwrap();
        let b = train_ngram(&sents(&["bb", "bab"]), 2, &vocab("ab")).unwrap();
        let mix = InterpolatedLm::new(vec![a.clone(), b.clone()], vec![0.4, 0.6]).unwrap();
        for h in [vec![], vec![a.token_id("a")], vec![a.token_id("b")]] {
            for w in ["a", "b"] {
                let w = a.token_id(w);
                let pa = 10f64.powf(a.log10_cond(&h, w));
                let pb = 10f64.powf(b.log10_cond(&h, w));
                let pm = 10f64.powf(mix.log10_cond(&h, w));
                assert!(pm >= pa.min(pb) - 1e-12 && pm <= pa.max(pb) + 1e-12);
            }
        }
    }

    #[test]
    fn vocab_mismatch_is_rejected() {
        let a = train_ngram(&sents(&["ab"]), 2, &vocab("ab")).unwrap();
        let b = train_ngram(&sents(&["ac"]), 2, &vocab("ac")).unwrap();
        assert!(InterpolatedLm::new(vec![a, b], vec![0.5, 0.5]).is_err());
    }
}
