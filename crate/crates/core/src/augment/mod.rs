//! Training-data augmentation: 3-way speed perturbation, volume
//! perturbation, RIR reverberation and SpecAugment.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::frontend::{FeatureSequence, Waveform};
use crate::tensor::rng::{derive_seed, rng_from_seed};
use crate::text::{Manifest, ManifestRecord};

/// SpecAugment mask counts and maximum widths.
#[derive(Debug, Clone, Copy)]
pub struct SpecAugmentConfig {
    pub num_time_masks: usize,
    pub max_time_width: usize,
    pub num_freq_masks: usize,
    pub max_freq_width: usize,
}

impl SpecAugmentConfig {
    pub fn disabled() -> Self {
        SpecAugmentConfig {
            num_time_masks: 0,
            max_time_width: 0,
            num_freq_masks: 0,
            max_freq_width: 0,
        }
    }
}

impl Default for SpecAugmentConfig {
    fn default() -> Self {
        SpecAugmentConfig {
            num_time_masks: 2,
            max_time_width: 20,
            num_freq_masks: 2,
            max_freq_width: 10,
        }
    }
}

/// Which augmentations the training-set expander applies.
#[derive(Debug, Clone)]
pub struct AugmentPolicy {
    pub speed_factors: Vec<f64>,
    /// Gain range in dB; `None` disables volume perturbation.
    pub volume_range_db: Option<(f64, f64)>,
    /// Impulse responses to sample from; empty disables reverberation.
    pub rir_pool: Vec<Waveform>,
    pub specaug: SpecAugmentConfig,
}

impl AugmentPolicy {
    /// 3-way speed perturbation only.
    pub fn speed_only() -> Self {
        AugmentPolicy {
            speed_factors: vec![0.9, 1.0, 1.1],
            volume_range_db: None,
            rir_pool: Vec::new(),
            specaug: SpecAugmentConfig::disabled(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speed_factors.iter().any(|&f| f <= 0.0) {
            return Err(Error::Parameter("speed factor must be positive".into()));
        }
        if let Some((lo, hi)) = self.volume_range_db {
            if lo > hi {
                return Err(Error::Parameter(format!(
                    "volume range {}..{} inverted",
                    lo, hi
                )));
            }
        }
        Ok(())
    }
}

/// Linear-interpolation resampling at stride `factor`; a sinusoid of
/// frequency f comes out at f * factor.
pub fn speed_perturb(w: &Waveform, factor: f64) -> Result<Waveform> {
    if factor <= 0.0 {
        return Err(Error::Parameter(format!("speed factor {}", factor)));
    }
    if factor == 1.0 {
        return Ok(w.clone());
    }
    let n = w.len();
    if n == 0 {
        return Ok(w.clone());
    }
    let out_len = ((n - 1) as f64 / factor).floor() as usize + 1;
    let mut samples = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * factor;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        let v = if lo + 1 < n {
            w.samples[lo] * (1.0 - frac) + w.samples[lo + 1] * frac
        } else {
            w.samples[n - 1]
        };
        samples.push(v);
    }
    Waveform::new(samples, w.sample_rate)
}

/// Scales by 10^(gain/20) and hard-clips to [-1, 1]. Returns the clipped
/// sample count alongside the waveform.
pub fn volume_perturb(w: &Waveform, gain_db: f64) -> (Waveform, usize) {
    let gain = 10f64.powf(gain_db / 20.0);
    let mut clipped = 0;
    let samples = w
        .samples
        .iter()
        .map(|&s| {
            let v = s * gain;
            if v.abs() > 1.0 {
                clipped += 1;
            }
            v.clamp(-1.0, 1.0)
        })
        .collect();
    (
        Waveform {
            samples,
            sample_rate: w.sample_rate,
        },
        clipped,
    )
}

/// Full linear convolution with the impulse response (FFT-based), then
/// peak renormalization to the dry signal's peak.
pub fn apply_rir(w: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if w.sample_rate != rir.sample_rate {
        return Err(Error::Parameter(format!(
            "sample rate mismatch {} vs {}",
            w.sample_rate, rir.sample_rate
        )));
    }
    if w.is_empty() || rir.is_empty() {
        return Err(Error::Parameter("empty signal in convolution".into()));
    }
    let out_len = w.len() + rir.len() - 1;
    let fft_len = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_len);
    let ifft = planner.plan_fft_inverse(fft_len);
    let mut a: Vec<Complex<f64>> = w
        .samples
        .iter()
        .map(|&s| Complex::new(s, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    let mut b: Vec<Complex<f64>> = rir
        .samples
        .iter()
        .map(|&s| Complex::new(s, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    fft.process(&mut a);
    fft.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    ifft.process(&mut a);
    let scale = 1.0 / fft_len as f64;
    let mut samples: Vec<f64> = a[..out_len].iter().map(|c| c.re * scale).collect();
    let dry_peak = w.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let wet_peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if wet_peak > 0.0 && dry_peak > 0.0 {
        let k = dry_peak / wet_peak;
        for s in samples.iter_mut() {
            *s *= k;
        }
    }
    Waveform::new(samples, w.sample_rate)
}

/// Exponentially decaying white-noise impulse response with a unit leading
/// impulse. Amplitude envelope is exp(-t / decay_time).
pub fn synth_rir(decay_time_s: f64, sample_rate: u32, seed: u64) -> Result<Waveform> {
    if decay_time_s <= 0.0 {
        return Err(Error::Parameter("decay time must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let sr = sample_rate as f64;
    let n = (4.0 * decay_time_s * sr).round() as usize;
    let mut samples = Vec::with_capacity(n);
    samples.push(1.0);
    for i in 1..n {
        let t = i as f64 / sr;
        let env = (-t / decay_time_s).exp();
        samples.push(0.3 * env * rng.gen_range(-1.0..1.0));
    }
    Waveform::new(samples, sample_rate)
}

/// Masks random time stripes and mel channels, filling with the
/// per-utterance mel mean. Pitch columns (everything past the mel block)
/// are never touched.
pub fn spec_augment(f: &FeatureSequence, cfg: &SpecAugmentConfig, seed: u64) -> Result<FeatureSequence> {
    let frames = f.num_frames();
    let dim = f.dim();
    let mel_dim = dim.saturating_sub(3).max(1).min(dim);
    if cfg.max_time_width > frames || cfg.max_freq_width > mel_dim {
        return Err(Error::Parameter(format!(
            "mask widths ({}, {}) exceed feature dims ({}, {})",
            cfg.max_time_width, cfg.max_freq_width, frames, mel_dim
        )));
    }
    let mut out = f.clone();
    if cfg.num_time_masks == 0 && cfg.num_freq_masks == 0 {
        return Ok(out);
    }
    let mut mel_sum = 0.0;
    for t in 0..frames {
        for m in 0..mel_dim {
            mel_sum += f.frames.at2(t, m);
        }
    }
    let fill = mel_sum / (frames * mel_dim) as f64;

    let mut rng = rng_from_seed(seed);
    for _ in 0..cfg.num_time_masks {
        let width = rng.gen_range(0..=cfg.max_time_width);
        if width == 0 {
            continue;
        }
        let start = rng.gen_range(0..=frames - width);
        for t in start..start + width {
            for m in 0..mel_dim {
                out.frames.data[t * dim + m] = fill;
            }
        }
    }
    for _ in 0..cfg.num_freq_masks {
        let width = rng.gen_range(0..=cfg.max_freq_width);
        if width == 0 {
            continue;
        }
        let start = rng.gen_range(0..=mel_dim - width);
        for t in 0..frames {
            for m in start..start + width {
                out.frames.data[t * dim + m] = fill;
            }
        }
    }
    Ok(out)
}

/// Materializes the speed/volume/RIR variants of every utterance in the
/// manifest. Audio is read relative to `in_root` and written under
/// `out_root`; variant ids follow `<src>#sp<factor>#v<seed>`. SpecAugment
/// is applied on the fly at training time, not here.
pub fn expand_training_set(
    manifest: &Manifest,
    policy: &AugmentPolicy,
    in_root: &Path,
    out_root: &Path,
    seed: u64,
) -> Result<Manifest> {
    policy.validate()?;
    std::fs::create_dir_all(out_root.join("audio"))?;

    struct Job {
        rec: ManifestRecord,
        factor: f64,
        vseed: u64,
    }
    let mut jobs = Vec::new();
    for rec in manifest.records() {
        for &factor in &policy.speed_factors {
            let vseed = derive_seed(seed, &format!("aug:{}:{}", rec.utt_id, factor));
            jobs.push(Job {
                rec: rec.clone(),
                factor,
                vseed,
            });
        }
    }

    let results: Vec<Result<ManifestRecord>> = jobs
        .par_iter()
        .map(|job| {
            let dry = Waveform::load(&in_root.join(&job.rec.audio_path))?;
            let mut w = speed_perturb(&dry, job.factor)?;
            let mut rng = rng_from_seed(job.vseed);
            if let Some((lo, hi)) = policy.volume_range_db {
                let gain = if lo == hi { lo } else { rng.gen_range(lo..hi) };
                w = volume_perturb(&w, gain).0;
            }
            if !policy.rir_pool.is_empty() {
                let rir = &policy.rir_pool[rng.gen_range(0..policy.rir_pool.len())];
                w = apply_rir(&w, rir)?;
            }
            let utt_id = format!("{}#sp{}#v{}", job.rec.utt_id, job.factor, job.vseed);
            let rel = format!("audio/{}.f64", utt_id.replace(['#', '.'], "_"));
            w.save(&out_root.join(&rel))?;
            Ok(ManifestRecord {
                utt_id,
                audio_path: rel,
                speaker_id: job.rec.speaker_id.clone(),
                subset: job.rec.subset,
                transcript: job.rec.transcript.clone(),
            })
        })
        .collect();

    let mut out = Manifest::new();
    for r in results {
        out.push(r?)?;
    }
    Ok(out)
}
