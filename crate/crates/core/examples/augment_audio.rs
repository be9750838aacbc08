//! Demonstrates the four augmentation methods: 3-way speed perturbation,
//! volume perturbation, room-impulse-response reverberation and
//! SpecAugment masking.
//!
//! Run with: cargo run --example augment_audio

use asrkit::augment::{
    apply_rir, spec_augment, speed_perturb, synth_rir, volume_perturb, SpecAugmentConfig,
};
use asrkit::frontend::{
    adult_profile, default_recipes, extract_features, synthesize_utterance, SynthesisSpec,
};
use asrkit::tensor::rng::rng_from_seed;

fn main() -> asrkit::Result<()> {
    let mut rng = rng_from_seed(5);
    let spec = SynthesisSpec {
        recipes: default_recipes(&(0..20).collect::<Vec<_>>()),
        speaker: adult_profile(&mut rng),
        noise_floor: 0.002,
        silence_s: 0.05,
        sample_rate: 16000,
    };
    let dry = synthesize_utterance(&vec![7, 2, 9], &spec, 31)?;
    println!("dry: {} samples ({:.3} s)", dry.len(), dry.duration_s());

    for factor in [0.9, 1.0, 1.1] {
        let warped = speed_perturb(&dry, factor)?;
        println!(
            "  speed x{:.1} -> {} samples ({:.3} s)",
            factor,
            warped.len(),
            warped.duration_s()
        );
    }

    let (louder, clipped) = volume_perturb(&dry, 6.0);
    let peak = |w: &asrkit::frontend::Waveform| w.samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    println!(
        "  volume +6 dB: peak {:.3} -> {:.3} ({} samples clipped)",
        peak(&dry),
        peak(&louder),
        clipped
    );

    let rir = synth_rir(0.25, 16000, 77)?;
    let wet = apply_rir(&dry, &rir)?;
    println!(
        "  reverb (T60 ~ 0.25 s): {} -> {} samples",
        dry.len(),
        wet.len()
    );

    // masked cells are filled with the utterance's mean mel energy
    let feats = extract_features(&dry, "aug_demo")?;
    let masked = spec_augment(&feats, &SpecAugmentConfig::default(), 123)?;
    let changed = feats
        .frames
        .data
        .iter()
        .zip(&masked.frames.data)
        .filter(|(a, b)| a != b)
        .count();
    println!(
        "  specaugment: {} frames x {} dims, {} masked cells ({:.1}%)",
        masked.num_frames(),
        masked.dim(),
        changed,
        100.0 * changed as f64 / masked.frames.data.len() as f64
    );
    Ok(())
}
