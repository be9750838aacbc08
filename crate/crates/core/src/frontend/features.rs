use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::frontend::Waveform;
use crate::tensor::{load_params, save_params, ParamStore, Tensor};

pub const DEFAULT_N_MELS: usize = 80;
pub const DEFAULT_WIN_S: f64 = 0.025;
pub const DEFAULT_HOP_S: f64 = 0.010;
const LOG_FLOOR: f64 = 1e-10;
const FFT_SIZE: usize = 512;
const PITCH_MIN_HZ: f64 = 60.0;
const PITCH_MAX_HZ: f64 = 400.0;
const VOICING_THRESHOLD: f64 = 0.45;

/// T x D acoustic feature matrix (80 log-mel + 3 pitch by default).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Tensor,
    pub frame_shift: f64,
    pub utt_id: String,
}

impl FeatureSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    /// Cache file in the parameter checkpoint format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut store = ParamStore::new();
        store.add("frames", self.frames.clone())?;
        store.add("frame_shift", Tensor::scalar(self.frame_shift))?;
        save_params(&store, path)
    }

    pub fn load(path: &Path, utt_id: &str) -> Result<Self> {
        let store = load_params(path)?;
        Ok(FeatureSequence {
            frames: store.get("frames")?.clone(),
            frame_shift: store.get("frame_shift")?.data[0],
            utt_id: utt_id.to_string(),
        })
    }
}

fn mel_of_hz(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn hz_of_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over FFT bins 0..=n_fft/2, spanning 0 Hz to
/// Nyquist. Returns `n_mels` rows of bin weights.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let n_bins = n_fft / 2 + 1;
    let max_mel = mel_of_hz(nyquist);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| hz_of_mel(max_mel * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = |b: usize| b as f64 * sample_rate as f64 / n_fft as f64;
    let mut filters = vec![vec![0.0; n_bins]; n_mels];
    for m in 0..n_mels {
        let (lo, center, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for b in 0..n_bins {
            let f = bin_hz(b);
            if f > lo && f < hi {
                filters[m][b] = if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
            }
        }
    }
    filters
}

/// Mel channel center frequencies, for locating spectral peaks.
pub fn mel_center_frequencies(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let max_mel = mel_of_hz(sample_rate as f64 / 2.0);
    (1..=n_mels)
        .map(|i| hz_of_mel(max_mel * i as f64 / (n_mels + 1) as f64))
        .collect()
}

fn frame_count(n: usize, win: usize, hop: usize) -> Result<usize> {
    if n < win {
        return Err(Error::Feature(format!(
            "waveform of {} samples shorter than one {}-sample window",
            n, win
        )));
    }
    Ok(1 + (n - win) / hop)
}

/// Log-mel filterbank features: pre-emphasis 0.97, Hann window, magnitude
/// FFT, triangular mel bank, natural log floored at 1e-10.
pub fn logmel_fbank(w: &Waveform, n_mels: usize, win_s: f64, hop_s: f64) -> Result<Tensor> {
    let sr = w.sample_rate as f64;
    let win = (win_s * sr).round() as usize;
    let hop = (hop_s * sr).round() as usize;
    let frames = frame_count(w.len(), win, hop)?;
    if win > FFT_SIZE {
        return Err(Error::Feature(format!(
            "window {} exceeds FFT size {}",
            win, FFT_SIZE
        )));
    }

    let mut emphasized = Vec::with_capacity(w.len());
    let mut prev = 0.0;
    for &s in &w.samples {
        emphasized.push(s - 0.97 * prev);
        prev = s;
    }

    let hann: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (win - 1) as f64).cos())
        .collect();
    let filters = mel_filterbank(n_mels, FFT_SIZE, w.sample_rate);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(FFT_SIZE);

    let mut out = vec![0.0; frames * n_mels];
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    for t in 0..frames {
        let base = t * hop;
        for i in 0..FFT_SIZE {
            buf[i] = if i < win {
                Complex::new(emphasized[base + i] * hann[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let mags: Vec<f64> = buf[..FFT_SIZE / 2 + 1].iter().map(|c| c.norm()).collect();
        for (m, filter) in filters.iter().enumerate() {
            let e: f64 = filter.iter().zip(&mags).map(|(f, x)| f * x).sum();
            out[t * n_mels + m] = e.max(LOG_FLOOR).ln();
        }
    }
    Tensor::from_vec(&[frames, n_mels], out)
}

/// Per-frame F0 and voicing confidence from normalized autocorrelation,
/// framed identically to the filterbank.
pub fn estimate_f0_contour(w: &Waveform, hop_s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let sr = w.sample_rate as f64;
    let win = (DEFAULT_WIN_S * sr).round() as usize;
    let hop = (hop_s * sr).round() as usize;
    let frames = frame_count(w.len(), win, hop)?;
    let ac_win = FFT_SIZE; // longer window than fbank's, for low-F0 lags
    let lag_min = (sr / PITCH_MAX_HZ).floor() as usize;
    let lag_max = (sr / PITCH_MIN_HZ).ceil() as usize;

    let mut f0 = vec![0.0; frames];
    let mut conf = vec![0.0; frames];
    for t in 0..frames {
        let base = t * hop;
        let seg = &w.samples[base..w.len().min(base + ac_win)];
        let n = seg.len();
        if n <= lag_min + 2 {
            continue;
        }
        let hi = lag_max.min(n - 2);
        let mut r = vec![0.0; hi + 2];
        for tau in lag_min.saturating_sub(1)..=hi + 1 {
            if tau >= n {
                break;
            }
            let m = n - tau;
            let mut num = 0.0;
            let mut e0 = 0.0;
            let mut e1 = 0.0;
            for i in 0..m {
                num += seg[i] * seg[i + tau];
                e0 += seg[i] * seg[i];
                e1 += seg[i + tau] * seg[i + tau];
            }
            let den = (e0 * e1).sqrt();
            if den > 1e-12 {
                r[tau] = num / den;
            }
        }
        let r_max = r[lag_min..=hi].iter().cloned().fold(f64::MIN, f64::max);
        // a periodic signal peaks equally at every multiple of its period;
        // take the smallest lag among near-equal local maxima to avoid
        // octave errors
        let mut best_tau = lag_min;
        let mut found = false;
        for tau in lag_min..=hi {
            let local_max = r[tau] >= r[tau.saturating_sub(1)] && r[tau] >= r[tau + 1];
            if local_max && r[tau] >= r_max - 0.02 {
                best_tau = tau;
                found = true;
                break;
            }
        }
        if !found {
            for tau in lag_min..=hi {
                if r[tau] > r[best_tau] {
                    best_tau = tau;
                }
            }
        }
        let peak = r[best_tau];
        conf[t] = peak.clamp(0.0, 1.0);
        // parabolic refinement around the integer peak
        let mut tau_star = best_tau as f64;
        if best_tau > lag_min && best_tau < hi {
            let (rm, r0, rp) = (r[best_tau - 1], r[best_tau], r[best_tau + 1]);
            let denom = rm - 2.0 * r0 + rp;
            if denom.abs() > 1e-12 {
                tau_star += 0.5 * (rm - rp) / denom;
            }
        }
        if tau_star > 0.0 {
            f0[t] = sr / tau_star;
        }
    }
    Ok((f0, conf))
}

/// 3-dim pitch features per frame: voicing confidence, mean-normalized
/// log-F0 (unvoiced frames get linearly interpolated F0), and the delta
/// of log-F0.
pub fn pitch_features(w: &Waveform, hop_s: f64) -> Result<Tensor> {
    let (f0_raw, conf) = estimate_f0_contour(w, hop_s)?;
    let frames = f0_raw.len();

    // interpolate F0 through unvoiced stretches
    let voiced: Vec<usize> = (0..frames)
        .filter(|&t| conf[t] >= VOICING_THRESHOLD && f0_raw[t] > 0.0)
        .collect();
    let mut f0 = vec![0.0; frames];
    if voiced.is_empty() {
        f0.iter_mut().for_each(|v| *v = 100.0);
    } else {
        for t in 0..frames {
            let next = voiced.iter().find(|&&v| v >= t);
            let prev = voiced.iter().rev().find(|&&v| v <= t);
            f0[t] = match (prev, next) {
                (Some(&p), Some(&nx)) if p == nx => f0_raw[p],
                (Some(&p), Some(&nx)) => {
                    let a = (t - p) as f64 / (nx - p) as f64;
                    f0_raw[p] * (1.0 - a) + f0_raw[nx] * a
                }
                (Some(&p), None) => f0_raw[p],
                (None, Some(&nx)) => f0_raw[nx],
                (None, None) => unreachable!(),
            };
        }
    }

    let lf0: Vec<f64> = f0.iter().map(|&v| v.ln()).collect();
    let mean = lf0.iter().sum::<f64>() / frames as f64;
    let norm: Vec<f64> = lf0.iter().map(|v| v - mean).collect();

    let mut out = vec![0.0; frames * 3];
    for t in 0..frames {
        let delta = if frames == 1 {
            0.0
        } else if t == 0 {
            norm[1] - norm[0]
        } else if t == frames - 1 {
            norm[t] - norm[t - 1]
        } else {
            (norm[t + 1] - norm[t - 1]) / 2.0
        };
        out[t * 3] = conf[t];
        out[t * 3 + 1] = norm[t];
        out[t * 3 + 2] = delta;
    }
    Tensor::from_vec(&[frames, 3], out)
}

/// Full 83-dim feature matrix: 80 log-mel + 3 pitch.
pub fn extract_features(w: &Waveform, utt_id: &str) -> Result<FeatureSequence> {
    let mel = logmel_fbank(w, DEFAULT_N_MELS, DEFAULT_WIN_S, DEFAULT_HOP_S)?;
    let pitch = pitch_features(w, DEFAULT_HOP_S)?;
    let frames = mel.rows();
    debug_assert_eq!(frames, pitch.rows());
    let d = DEFAULT_N_MELS + 3;
    let mut data = Vec::with_capacity(frames * d);
    for t in 0..frames {
        data.extend_from_slice(&mel.data[t * DEFAULT_N_MELS..(t + 1) * DEFAULT_N_MELS]);
        data.extend_from_slice(&pitch.data[t * 3..(t + 1) * 3]);
    }
    Ok(FeatureSequence {
        frames: Tensor::from_vec(&[frames, d], data)?,
        frame_shift: DEFAULT_HOP_S,
        utt_id: utt_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::rng_from_seed;
    use rand::Rng;

    fn sine(freq: f64, secs: f64, sr: u32) -> Waveform {
        let n = (secs * sr as f64) as usize;
        let samples = (0..n)
            .map(|i| 0.8 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn one_second_gives_98_frames() {
        let w = sine(440.0, 1.0, 16000);
        let mel = logmel_fbank(&w, 80, 0.025, 0.010).unwrap();
        assert_eq!(mel.shape, vec![98, 80]);
    }

    #[test]
    fn all_zero_waveform_hits_log_floor() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let mel = logmel_fbank(&w, 80, 0.025, 0.010).unwrap();
        for v in &mel.data {
            assert_eq!(*v, LOG_FLOOR.ln());
        }
    }

    #[test]
    fn too_short_waveform_errors() {
        let w = Waveform::new(vec![0.0; 100], 16000).unwrap();
        assert!(logmel_fbank(&w, 80, 0.025, 0.010).is_err());
    }

    #[test]
    fn pure_tone_peaks_at_nearest_mel_center() {
        let w = sine(1000.0, 0.5, 16000);
        let mel = logmel_fbank(&w, 80, 0.025, 0.010).unwrap();
        let centers = mel_center_frequencies(80, 16000);
        let expect = centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - 1000.0)
                    .abs()
                    .partial_cmp(&(b.1 - 1000.0).abs())
                    .unwrap()
            })
            .unwrap()
            .0;
        // argmax of a mid-utterance frame
        let t = mel.rows() / 2;
        let row = &mel.data[t * 80..(t + 1) * 80];
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(
            (argmax as i64 - expect as i64).abs() <= 1,
            "argmax {} vs nearest center {}",
            argmax,
            expect
        );
    }

    #[test]
    fn mel_filters_cover_band() {
        let filters = mel_filterbank(80, 512, 16000);
        for (i, f) in filters.iter().enumerate() {
            assert!(f.iter().sum::<f64>() > 0.0, "filter {} is all-zero", i);
        }
    }

    #[test]
    fn estimates_220hz_within_4hz() {
        let w = sine(220.0, 0.5, 16000);
        let (f0, conf) = estimate_f0_contour(&w, 0.010).unwrap();
        let mut voiced: Vec<f64> = f0
            .iter()
            .zip(&conf)
            .filter(|(_, &c)| c > 0.8)
            .map(|(&f, _)| f)
            .collect();
        voiced.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = voiced[voiced.len() / 2];
        assert!((median - 220.0).abs() < 4.0, "median F0 {}", median);
    }

    #[test]
    fn white_noise_has_low_voicing() {
        let mut rng = rng_from_seed(17);
        let samples: Vec<f64> = (0..16000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let w = Waveform::new(samples, 16000).unwrap();
        let (_, conf) = estimate_f0_contour(&w, 0.010).unwrap();
        let mean = conf.iter().sum::<f64>() / conf.len() as f64;
        assert!(mean < 0.3, "mean voicing {}", mean);
    }

    #[test]
    fn delta_of_constant_f0_is_zero_away_from_edges() {
        // 200 Hz: the 80-sample period divides the 160-sample hop, so every
        // interior frame sees an identical segment and an identical estimate
        let w = sine(200.0, 1.0, 16000);
        let p = pitch_features(&w, 0.010).unwrap();
        let t_end = p.rows() - 5;
        for t in 2..t_end {
            assert!(
                p.at2(t, 2).abs() < 1e-6,
                "delta at frame {} = {}",
                t,
                p.at2(t, 2)
            );
        }
    }

    #[test]
    fn prefix_frames_match_full_frames() {
        let w = sine(330.0, 1.0, 16000);
        let full = logmel_fbank(&w, 80, 0.025, 0.010).unwrap();
        let prefix_w = Waveform::new(w.samples[..8000].to_vec(), 16000).unwrap();
        let prefix = logmel_fbank(&prefix_w, 80, 0.025, 0.010).unwrap();
        for t in 0..prefix.rows() {
            for m in 0..80 {
                assert_eq!(prefix.at2(t, m), full.at2(t, m));
            }
        }
    }

    #[test]
    fn feature_cache_round_trip() {
        let w = sine(500.0, 0.5, 16000);
        let fs = extract_features(&w, "utt1").unwrap();
        assert_eq!(fs.dim(), 83);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("utt1.feat");
        fs.save(&p).unwrap();
        let l = FeatureSequence::load(&p, "utt1").unwrap();
        assert_eq!(l, fs);
    }
}
