use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::frontend::{
    adult_profile, child_profile, default_recipes, synthesize_utterance, SynthesisSpec,
};
use crate::tensor::rng::{derive_seed, rng_from_seed};
use crate::text::{Manifest, ManifestRecord, Subset};

/// Characters the synthesizer can speak. Each maps to a distinct formant
/// recipe; transcripts are random strings over this inventory.
pub const TOKEN_INVENTORY: &str = "零一二三四五六七八九你好的是不我他们在有";

#[derive(Debug, Clone, Copy)]
pub struct SetConfig {
    pub speakers: usize,
    pub utts_per_speaker: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub out_dir: PathBuf,
    pub set_a: SetConfig,
    pub set_c1: SetConfig,
    pub set_c2: SetConfig,
    pub noise_floor: f64,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn desk_scale(out_dir: &Path, seed: u64) -> Self {
        CorpusConfig {
            out_dir: out_dir.to_path_buf(),
            set_a: SetConfig {
                speakers: 40,
                utts_per_speaker: 25,
                min_tokens: 3,
                max_tokens: 8,
            },
            set_c1: SetConfig {
                speakers: 10,
                utts_per_speaker: 20,
                min_tokens: 3,
                max_tokens: 8,
            },
            set_c2: SetConfig {
                speakers: 5,
                utts_per_speaker: 20,
                min_tokens: 3,
                max_tokens: 8,
            },
            noise_floor: 0.002,
            seed,
        }
    }
}

/// Writes synthetic Sets A, C1 and C2 (audio plus `manifest.tsv`) under
/// the config's output directory. Deterministic per seed: per-speaker and
/// per-utterance RNG streams are derived from the master seed.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Manifest> {
    let inventory: Vec<char> = TOKEN_INVENTORY.chars().collect();
    let ids: Vec<usize> = (0..inventory.len()).collect();
    let recipes = default_recipes(&ids);
    let audio_dir = config.out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;

    // plan all utterances first, then render in parallel
    struct Plan {
        utt_id: String,
        speaker_id: String,
        subset: Subset,
        tokens: Vec<usize>,
        spec: SynthesisSpec,
        seed: u64,
    }
    let mut plans: Vec<Plan> = Vec::new();
    for (subset, set_cfg) in [
        (Subset::A, &config.set_a),
        (Subset::C1, &config.set_c1),
        (Subset::C2, &config.set_c2),
    ] {
        for s in 0..set_cfg.speakers {
            let speaker_id = format!("{}_s{:03}", subset, s);
            let mut spk_rng =
                rng_from_seed(derive_seed(config.seed, &format!("spk:{}", speaker_id)));
            let speaker = match subset {
                Subset::A => adult_profile(&mut spk_rng),
                Subset::C1 => child_profile(&mut spk_rng, false),
                Subset::C2 => child_profile(&mut spk_rng, true),
            };
            let spec = SynthesisSpec {
                recipes: recipes.clone(),
                speaker,
                noise_floor: config.noise_floor,
                silence_s: 0.05,
                sample_rate: 16000,
            };
            for u in 0..set_cfg.utts_per_speaker {
                let utt_id = format!("{}_u{:03}", speaker_id, u);
                let useed = derive_seed(config.seed, &format!("utt:{}", utt_id));
                let mut urng = rng_from_seed(useed);
                let len = urng.gen_range(set_cfg.min_tokens..=set_cfg.max_tokens);
                let tokens: Vec<usize> =
                    (0..len).map(|_| urng.gen_range(0..inventory.len())).collect();
                plans.push(Plan {
                    utt_id,
                    speaker_id: speaker_id.clone(),
                    subset,
                    tokens,
                    spec: spec.clone(),
                    seed: useed,
                });
            }
        }
    }

    let rendered: Vec<Result<(String, String, Subset, String, String)>> = plans
        .par_iter()
        .map(|p| {
            let w = synthesize_utterance(&p.tokens, &p.spec, p.seed)?;
            let rel = format!("audio/{}.f64", p.utt_id);
            w.save(&config.out_dir.join(&rel))?;
            let transcript: String = p.tokens.iter().map(|&t| inventory[t]).collect();
            Ok((
                p.utt_id.clone(),
                p.speaker_id.clone(),
                p.subset,
                rel,
                transcript,
            ))
        })
        .collect();

    let mut manifest = Manifest::new();
    for r in rendered {
        let (utt_id, speaker_id, subset, rel, transcript) = r?;
        manifest.push(ManifestRecord {
            utt_id,
            audio_path: rel,
            speaker_id,
            subset,
            transcript,
        })?;
    }
    manifest.save(&config.out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}
