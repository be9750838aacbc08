use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::frontend::Waveform;
use crate::tensor::rng::rng_from_seed;
use crate::text::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgeGroup {
    Adult,
    Child,
}

/// Formant recipe for one vocabulary token.
#[derive(Debug, Clone)]
pub struct TokenRecipe {
    /// (center frequency Hz, relative amplitude) pairs.
    pub formants: Vec<(f64, f64)>,
    pub duration_s: f64,
}

/// Per-speaker voice parameters. Child voices sit higher in F0 and vary
/// more in speaking rate than adult voices.
#[derive(Debug, Clone)]
pub struct SpeakerProfile {
    pub f0_base: f64,
    pub f0_jitter: f64,
    pub rate_multiplier: f64,
    pub rate_jitter: f64,
    pub formant_scale: f64,
    pub age_group: AgeGroup,
}

const ADULT_F0_CEILING: f64 = 180.0;
const CHILD_F0_FLOOR: f64 = 220.0;

/// Adult voice drawn around 120 Hz with mild rate variation.
pub fn adult_profile(rng: &mut ChaCha20Rng) -> SpeakerProfile {
    SpeakerProfile {
        f0_base: rng.gen_range(100.0..160.0),
        f0_jitter: 0.03,
        rate_multiplier: rng.gen_range(0.95..1.05),
        rate_jitter: 0.05,
        formant_scale: 1.0,
        age_group: AgeGroup::Adult,
    }
}

/// Child voice: higher F0, scaled-up formants (shorter vocal tract),
/// slower and more variable rate.
pub fn child_profile(rng: &mut ChaCha20Rng, conversational: bool) -> SpeakerProfile {
    SpeakerProfile {
        f0_base: rng.gen_range(240.0..330.0),
        f0_jitter: 0.08,
        rate_multiplier: rng.gen_range(1.1..1.3),
        rate_jitter: if conversational { 0.30 } else { 0.12 },
        formant_scale: rng.gen_range(1.25..1.4),
        age_group: AgeGroup::Child,
    }
}

/// Everything needed to render one utterance.
#[derive(Debug, Clone)]
pub struct SynthesisSpec {
    pub recipes: BTreeMap<usize, TokenRecipe>,
    pub speaker: SpeakerProfile,
    pub noise_floor: f64,
    pub silence_s: f64,
    pub sample_rate: u32,
}

impl SynthesisSpec {
    pub fn validate(&self) -> Result<()> {
        if self.speaker.f0_base <= 0.0 {
            return Err(Error::Synthesis("F0 base must be positive".into()));
        }
        match self.speaker.age_group {
            AgeGroup::Adult if self.speaker.f0_base > ADULT_F0_CEILING => Err(Error::Synthesis(
                format!("adult F0 base {} above ceiling", self.speaker.f0_base),
            )),
            AgeGroup::Child if self.speaker.f0_base < CHILD_F0_FLOOR => Err(Error::Synthesis(
                format!("child F0 base {} below floor", self.speaker.f0_base),
            )),
            _ => Ok(()),
        }
    }
}

/// Formant recipes for a token inventory of `n` ids, laid out on a grid of
/// distinct (F1, F2) pairs. Ids are the caller's vocabulary ids.
pub fn default_recipes(ids: &[usize]) -> BTreeMap<usize, TokenRecipe> {
    let f1_grid = [350.0, 500.0, 650.0, 800.0];
    let f2_grid = [1100.0, 1500.0, 1900.0, 2300.0];
    let mut out = BTreeMap::new();
    for (k, &id) in ids.iter().enumerate() {
        let f1 = f1_grid[k % f1_grid.len()];
        let f2 = f2_grid[(k / f1_grid.len()) % f2_grid.len()];
        // third formant breaks remaining ties for k >= 16
        let f3 = 2700.0 + 150.0 * ((k / 16) % 4) as f64;
        out.insert(
            id,
            TokenRecipe {
                formants: vec![(f1, 1.0), (f2, 0.7), (f3, 0.35)],
                duration_s: 0.16,
            },
        );
    }
    out
}

fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Renders a token sequence as concatenated harmonic segments with a
/// formant-shaped spectral envelope, plus Gaussian noise at the configured
/// floor. Deterministic per seed.
pub fn synthesize_utterance(
    tokens: &TokenSequence,
    spec: &SynthesisSpec,
    seed: u64,
) -> Result<Waveform> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let sr = spec.sample_rate as f64;
    let silence = (spec.silence_s * sr).round() as usize;
    let mut samples = vec![0.0f64; silence];

    for &tok in tokens {
        let recipe = spec.recipes.get(&tok).ok_or_else(|| {
            Error::Synthesis(format!("token id {} has no synthesis recipe", tok))
        })?;
        let rate_u: f64 = rng.gen_range(-1.0..1.0);
        let dur = (recipe.duration_s * spec.speaker.rate_multiplier
            * (1.0 + spec.speaker.rate_jitter * rate_u))
            .max(0.12);
        let f0_u: f64 = rng.gen_range(-1.0..1.0);
        let f0 = spec.speaker.f0_base * (1.0 + spec.speaker.f0_jitter * f0_u);
        let n = (dur * sr).round() as usize;
        let envelope_at = |f: f64| -> f64 {
            recipe
                .formants
                .iter()
                .map(|&(center, amp)| {
                    let c = center * spec.speaker.formant_scale;
                    amp * (-((f - c) / 170.0).powi(2)).exp()
                })
                .sum::<f64>()
        };
        let nyquist = sr / 2.0;
        let mut harmonics = Vec::new();
        let mut h = 1.0;
        while h * f0 < nyquist.min(3600.0) {
            let a = envelope_at(h * f0) / h.sqrt();
            if a > 1e-4 {
                harmonics.push((h, a));
            }
            h += 1.0;
        }
        let ramp = (0.010 * sr) as usize;
        for i in 0..n {
            let t = i as f64 / sr;
            let mut v = 0.0;
            for &(h, a) in &harmonics {
                v += a * (2.0 * std::f64::consts::PI * h * f0 * t).sin();
            }
            let mut env = 1.0;
            if i < ramp {
                env = i as f64 / ramp as f64;
            }
            if n - 1 - i < ramp {
                env = env.min((n - 1 - i) as f64 / ramp as f64);
            }
            samples.push(v * env);
        }
        // short inter-token gap
        samples.extend(std::iter::repeat(0.0).take((0.02 * sr) as usize));
    }
    samples.extend(std::iter::repeat(0.0).take(silence));

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let scale = 0.9 / peak;
        for s in samples.iter_mut() {
            *s *= scale;
        }
    }
    if spec.noise_floor > 0.0 {
        for s in samples.iter_mut() {
            *s = (*s + spec.noise_floor * gaussian(&mut rng)).clamp(-1.0, 1.0);
        }
    }
    Waveform::new(samples, spec.sample_rate)
}
