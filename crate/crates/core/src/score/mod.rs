//! Character error rate scoring: unit-cost edit distance with a fixed
//! backtrace tie order, pooled corpus CER, and per-speaker / per-subset
//! breakdowns.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::Manifest;

/// Substitution / insertion / deletion counts plus the reference length.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EditCounts {
    pub sub: usize,
    pub ins: usize,
    pub del: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.sub + self.ins + self.del
    }

    /// (S + I + D) / N_ref. Zero errors against an empty reference score 0.
    pub fn cer(&self) -> f64 {
        if self.ref_len == 0 {
            if self.total() == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.total() as f64 / self.ref_len as f64
        }
    }

    pub fn accumulate(&mut self, other: &EditCounts) {
        self.sub += other.sub;
        self.ins += other.ins;
        self.del += other.del;
        self.ref_len += other.ref_len;
    }
}

/// Minimal unit-cost alignment via the full DP table. Backtrace ties are
/// resolved preferring substitution, then insertion, then deletion, so the
/// (S, I, D) split is deterministic.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut dp = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        dp[idx(i, 0)] = i;
    }
    for j in 0..=m {
        dp[idx(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = if reference[i - 1] == hypothesis[j - 1] { 0 } else { 1 };
            dp[idx(i, j)] = (dp[idx(i - 1, j - 1)] + sub_cost)
                .min(dp[idx(i, j - 1)] + 1)
                .min(dp[idx(i - 1, j)] + 1);
        }
    }
    let mut counts = EditCounts {
        ref_len: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[idx(i, j)];
        if i > 0 && j > 0 {
            let sub_cost = if reference[i - 1] == hypothesis[j - 1] { 0 } else { 1 };
            if dp[idx(i - 1, j - 1)] + sub_cost == here {
                if sub_cost == 1 {
                    counts.sub += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && dp[idx(i, j - 1)] + 1 == here {
            counts.ins += 1;
            j -= 1;
            continue;
        }
        counts.del += 1;
        i -= 1;
    }
    counts
}

/// Pooled and per-speaker CER over a hypothesis set keyed by utterance id.
#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub overall: EditCounts,
    pub per_speaker: BTreeMap<String, EditCounts>,
    pub per_subset: BTreeMap<String, EditCounts>,
    pub speaker_std: f64,
    pub num_utts: usize,
}

/// Scores every hypothesis against its manifest transcript. Hypotheses
/// without a manifest entry are an error; manifest entries without a
/// hypothesis are skipped (they were not decoded). With `exclude_unk` set,
/// utterances whose reference contains `unk_token` are dropped from
/// scoring.
pub fn score_corpus(
    manifest: &Manifest,
    hyps: &BTreeMap<String, String>,
    unk_token: &str,
    exclude_unk: bool,
) -> Result<ScoreReport> {
    let missing: Vec<&String> = hyps
        .keys()
        .filter(|id| manifest.get(id).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Scoring(format!(
            "hypotheses without references: {}",
            missing
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let mut overall = EditCounts::default();
    let mut per_speaker: BTreeMap<String, EditCounts> = BTreeMap::new();
    let mut per_subset: BTreeMap<String, EditCounts> = BTreeMap::new();
    let mut num_utts = 0;
    for (utt_id, hyp) in hyps {
        let rec = manifest.get(utt_id).unwrap();
        if exclude_unk && rec.transcript.contains(unk_token) {
            continue;
        }
        let r: Vec<char> = rec.transcript.chars().collect();
        let h: Vec<char> = hyp.chars().collect();
        let counts = edit_distance(&r, &h);
        overall.accumulate(&counts);
        per_speaker
            .entry(rec.speaker_id.clone())
            .or_default()
            .accumulate(&counts);
        per_subset
            .entry(rec.subset.to_string())
            .or_default()
            .accumulate(&counts);
        num_utts += 1;
    }
    // population standard deviation over speakers with scored tokens
    let cers: Vec<f64> = per_speaker
        .values()
        .filter(|c| c.ref_len > 0)
        .map(|c| c.cer())
        .collect();
    let speaker_std = if cers.is_empty() {
        0.0
    } else {
        let mean = cers.iter().sum::<f64>() / cers.len() as f64;
        (cers.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / cers.len() as f64).sqrt()
    };
    Ok(ScoreReport {
        overall,
        per_speaker,
        per_subset,
        speaker_std,
        num_utts,
    })
}

impl ScoreReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Scored {} utterances: CER {:.2}% (S={} I={} D={} / N={}), per-speaker std {:.2}%",
            self.num_utts,
            100.0 * self.overall.cer(),
            self.overall.sub,
            self.overall.ins,
            self.overall.del,
            self.overall.ref_len,
            self.speaker_std * 100.0
        );
        for (subset, c) in &self.per_subset {
            let _ = writeln!(out, "  subset {}: CER {:.2}% (N={})", subset, 100.0 * c.cer(), c.ref_len);
        }
        for (spk, c) in &self.per_speaker {
            let _ = writeln!(out, "  speaker {}: CER {:.2}% (N={})", spk, 100.0 * c.cer(), c.ref_len);
        }
        out
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("scope\tname\tcer\tsub\tins\tdel\tref_len\n");
        let mut row = |scope: &str, name: &str, c: &EditCounts| {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{}\t{}\t{}\t{}",
                scope,
                name,
                c.cer(),
                c.sub,
                c.ins,
                c.del,
                c.ref_len
            );
        };
        row("overall", "all", &self.overall);
        for (s, c) in &self.per_subset {
            row("subset", s, c);
        }
        for (s, c) in &self.per_speaker {
            row("speaker", s, c);
        }
        let _ = writeln!(out, "std\tper_speaker\t{:.6}\t0\t0\t0\t0", self.speaker_std);
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::rng_from_seed;
    use crate::text::{ManifestRecord, Subset};
    use rand::Rng;

    /// Textbook recursive definition of Levenshtein distance.
    fn recursive_distance(r: &[u8], h: &[u8]) -> usize {
        match (r, h) {
            ([], _) => h.len(),
            (_, []) => r.len(),
            _ => {
                let sub = recursive_distance(&r[..r.len() - 1], &h[..h.len() - 1])
                    + usize::from(r[r.len() - 1] != h[h.len() - 1]);
                let ins = recursive_distance(r, &h[..h.len() - 1]) + 1;
                let del = recursive_distance(&r[..r.len() - 1], h) + 1;
                sub.min(ins).min(del)
            }
        }
    }

    #[test]
    fn identity_pair_has_no_errors() {
        let c = edit_distance(b"abcabc", b"abcabc");
        assert_eq!(c, EditCounts { sub: 0, ins: 0, del: 0, ref_len: 6 });
    }

    #[test]
    fn cat_versus_cut_is_one_substitution() {
        let c = edit_distance(b"cat", b"cut");
        assert_eq!((c.sub, c.ins, c.del), (1, 0, 0));
        assert!((c.cer() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matches_recursive_oracle_on_random_pairs() {
        for seed in 0..500 {
            let mut rng = rng_from_seed(seed);
            let n = rng.gen_range(0..=8);
            let m = rng.gen_range(0..=8);
            let r: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3u8)).collect();
            let h: Vec<u8> = (0..m).map(|_| rng.gen_range(0..3u8)).collect();
            let c = edit_distance(&r, &h);
            assert_eq!(c.total(), recursive_distance(&r, &h), "r={:?} h={:?}", r, h);
        }
    }

    #[test]
    fn total_bounded_by_longer_sequence_and_zero_iff_equal() {
        for seed in 500..700 {
            let mut rng = rng_from_seed(seed);
            let n = rng.gen_range(0..=8);
            let m = rng.gen_range(0..=8);
            let r: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3u8)).collect();
            let h: Vec<u8> = (0..m).map(|_| rng.gen_range(0..3u8)).collect();
            let c = edit_distance(&r, &h);
            assert!(c.total() <= n.max(m));
            assert_eq!(c.total() == 0, r == h);
        }
    }

    #[test]
    fn triangle_inequality_over_random_triples() {
        for seed in 700..900 {
            let mut rng = rng_from_seed(seed);
            let mk = |rng: &mut rand_chacha::ChaCha20Rng| -> Vec<u8> {
                let n = rng.gen_range(0..=6);
                (0..n).map(|_| rng.gen_range(0..3u8)).collect()
            };
            let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let ab = edit_distance(&a, &b).total();
            let bc = edit_distance(&b, &c).total();
            let ac = edit_distance(&a, &c).total();
            assert!(ac <= ab + bc);
        }
    }

    #[test]
    fn ties_prefer_substitution_over_indels() {
        // "ab" vs "ba" costs 2 either as two substitutions or as
        // insert+delete; the backtrace must report substitutions
        let c = edit_distance(b"ab", b"ba");
        assert_eq!((c.sub, c.ins, c.del), (2, 0, 0));
    }

    fn manifest_with(entries: &[(&str, &str, &str, Subset)]) -> Manifest {
        let mut m = Manifest::new();
        for (utt, spk, text, subset) in entries {
            m.push(ManifestRecord {
                utt_id: utt.to_string(),
                audio_path: format!("audio/{}.f64", utt),
                speaker_id: spk.to_string(),
                subset: *subset,
                transcript: text.to_string(),
            })
            .unwrap();
        }
        m
    }

    #[test]
    fn all_correct_scores_zero() {
        let m = manifest_with(&[
            ("u1", "s1", "一二三", Subset::C1),
            ("u2", "s2", "四五", Subset::C2),
        ]);
        let mut hyps = BTreeMap::new();
        hyps.insert("u1".to_string(), "一二三".to_string());
        hyps.insert("u2".to_string(), "四五".to_string());
        let r = score_corpus(&m, &hyps, "<unk>", false).unwrap();
        assert_eq!(r.overall.cer(), 0.0);
        assert_eq!(r.speaker_std, 0.0);
        assert_eq!(r.per_subset.len(), 2);
    }

    #[test]
    fn two_speaker_std_is_population_std() {
        // speaker s1: 1 error over 10 tokens (0.10); s2: 3 over 10 (0.30)
        let m = manifest_with(&[
            ("u1", "s1", "一二三四五六七八九零", Subset::C1),
            ("u2", "s2", "一二三四五六七八九零", Subset::C1),
        ]);
        let mut hyps = BTreeMap::new();
        hyps.insert("u1".to_string(), "好二三四五六七八九零".to_string());
        hyps.insert("u2".to_string(), "好好好四五六七八九零".to_string());
        let r = score_corpus(&m, &hyps, "<unk>", false).unwrap();
        assert!((r.speaker_std - 0.10).abs() < 1e-12);
        assert!((r.overall.cer() - 0.20).abs() < 1e-12);
    }

    #[test]
    fn pooled_cer_matches_independent_accumulation() {
        let m = manifest_with(&[
            ("u1", "s1", "一二三", Subset::C1),
            ("u2", "s1", "四五六七", Subset::C1),
            ("u3", "s2", "八九", Subset::C2),
        ]);
        let mut hyps = BTreeMap::new();
        hyps.insert("u1".to_string(), "一三".to_string());
        hyps.insert("u2".to_string(), "四五六七".to_string());
        hyps.insert("u3".to_string(), "八九零".to_string());
        let r = score_corpus(&m, &hyps, "<unk>", false).unwrap();
        // independent accumulation in reverse order
        let mut total_err = 0;
        let mut total_ref = 0;
        for (utt, hyp) in hyps.iter().rev() {
            let rec = m.get(utt).unwrap();
            let rc: Vec<char> = rec.transcript.chars().collect();
            let hc: Vec<char> = hyp.chars().collect();
            let c = edit_distance(&rc, &hc);
            total_err += c.total();
            total_ref += c.ref_len;
        }
        assert!((r.overall.cer() - total_err as f64 / total_ref as f64).abs() < 1e-15);
    }

    #[test]
    fn unknown_hypothesis_id_is_an_error() {
        let m = manifest_with(&[("u1", "s1", "一", Subset::C1)]);
        let mut hyps = BTreeMap::new();
        hyps.insert("ghost".to_string(), "一".to_string());
        let err = score_corpus(&m, &hyps, "<unk>", false).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn exclude_unk_drops_flagged_utterances() {
        let m = manifest_with(&[
            ("u1", "s1", "一<unk>二", Subset::C1),
            ("u2", "s1", "三四", Subset::C1),
        ]);
        let mut hyps = BTreeMap::new();
        hyps.insert("u1".to_string(), "一二".to_string());
        hyps.insert("u2".to_string(), "三四".to_string());
        let all = score_corpus(&m, &hyps, "<unk>", false).unwrap();
        let filtered = score_corpus(&m, &hyps, "<unk>", true).unwrap();
        assert_eq!(filtered.num_utts, 1);
        assert_eq!(filtered.overall.cer(), 0.0);
        assert!(all.overall.total() > 0);
    }
}
