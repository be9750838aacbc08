//! Synthesizes one utterance and extracts the 83-dimensional feature
//! sequence: 80 log-mel filterbank channels plus 3 pitch features.
//!
//! Run with: cargo run --example extract_features

use asrkit::frontend::{
    child_profile, default_recipes, estimate_f0_contour, extract_features, synthesize_utterance,
    SynthesisSpec, DEFAULT_N_MELS,
};
use asrkit::tensor::rng::rng_from_seed;

fn main() -> asrkit::Result<()> {
    let mut rng = rng_from_seed(42);
    let spec = SynthesisSpec {
        recipes: default_recipes(&(0..20).collect::<Vec<_>>()),
        speaker: child_profile(&mut rng, false),
        noise_floor: 0.002,
        silence_s: 0.05,
        sample_rate: 16000,
    };
    let wave = synthesize_utterance(&vec![3, 1, 4, 1, 5], &spec, 99)?;
    println!(
        "waveform: {} samples at {} Hz ({:.2} s)",
        wave.len(),
        wave.sample_rate,
        wave.duration_s()
    );

    let feats = extract_features(&wave, "demo_utt")?;
    println!(
        "features: {} frames x {} dims ({} mel + 3 pitch), 10 ms shift",
        feats.num_frames(),
        feats.dim(),
        DEFAULT_N_MELS
    );

    // mel energies of one mid-utterance frame, coarsely quantized
    let t = feats.num_frames() / 2;
    let row = &feats.frames.data[t * feats.dim()..t * feats.dim() + DEFAULT_N_MELS];
    let (lo, hi) = row
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let bar: String = row
        .iter()
        .step_by(4)
        .map(|&v| {
            let q = ((v - lo) / (hi - lo) * 7.0) as usize;
            [' ', '.', ':', '-', '=', '+', '*', '#'][q.min(7)]
        })
        .collect();
    println!("frame {:3} mel profile  |{}|", t, bar);

    let (f0, conf) = estimate_f0_contour(&wave, 0.010)?;
    let voiced: Vec<f64> = f0
        .iter()
        .zip(&conf)
        .filter(|(_, c)| **c > 0.6)
        .map(|(f, _)| *f)
        .collect();
    if !voiced.is_empty() {
        let mean = voiced.iter().sum::<f64>() / voiced.len() as f64;
        println!(
            "pitch: {} voiced frames, mean F0 {:.1} Hz (child register)",
            voiced.len(),
            mean
        );
    }
    Ok(())
}
