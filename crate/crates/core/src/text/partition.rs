use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::tensor::rng::rng_from_seed;
use crate::text::{Manifest, Subset};

/// Speaker-level train/validation/test split. Within each subset tag,
/// speakers are shuffled (seeded) and greedily assigned whole to the split
/// with the largest remaining utterance deficit, so split sizes land within
/// one speaker of the target ratios.
pub fn partition(
    manifest: &Manifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Manifest, Manifest, Manifest)> {
    let (a, b, c) = ratios;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(Error::Partition("ratios must be positive".into()));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::Partition(format!(
            "ratios sum to {}, expected 1",
            a + b + c
        )));
    }
    let mut rng = rng_from_seed(seed);
    // speaker -> split index, decided per subset
    let mut assignment: HashMap<(Subset, String), usize> = HashMap::new();
    for subset in Subset::all() {
        let sub = manifest.filter(|r| r.subset == subset);
        if sub.is_empty() {
            continue;
        }
        let mut speakers = sub.speakers();
        if speakers.len() < 3 {
            return Err(Error::Partition(format!(
                "subset {} has only {} speakers; need at least 3",
                subset,
                speakers.len()
            )));
        }
        let mut utt_count: HashMap<String, usize> = HashMap::new();
        for r in sub.records() {
            *utt_count.entry(r.speaker_id.clone()).or_default() += 1;
        }
        speakers.sort(); // canonical order before the seeded shuffle
        speakers.shuffle(&mut rng);
        let total = sub.len() as f64;
        let targets = [a * total, b * total, c * total];
        let mut filled = [0.0f64; 3];
        // every split must end up with at least one speaker
        for (i, spk) in speakers.iter().take(3).enumerate() {
            assignment.insert((subset, spk.clone()), i);
            filled[i] += utt_count[spk] as f64;
        }
        for spk in speakers.iter().skip(3) {
            let mut best = 0;
            let mut best_deficit = f64::NEG_INFINITY;
            for i in 0..3 {
                let deficit = targets[i] - filled[i];
                if deficit > best_deficit {
                    best_deficit = deficit;
                    best = i;
                }
            }
            assignment.insert((subset, spk.clone()), best);
            filled[best] += utt_count[spk] as f64;
        }
    }
    let mut out = [Manifest::new(), Manifest::new(), Manifest::new()];
    for r in manifest.records() {
        let idx = assignment[&(r.subset, r.speaker_id.clone())];
        out[idx].push(r.clone())?;
    }
    let [train, valid, test] = out;
    Ok((train, valid, test))
}
