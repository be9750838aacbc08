use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio, f64 samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parameter("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Parameter("non-finite sample".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Writes headerless little-endian f64 samples plus a text sidecar
    /// `<path>.hdr` with `sample_rate=` and `num_samples=` lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.samples.len() * 8);
        for s in &self.samples {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        std::fs::write(path, bytes)?;
        let hdr = format!(
            "sample_rate={}\nnum_samples={}\n",
            self.sample_rate,
            self.samples.len()
        );
        std::fs::write(sidecar_path(path), hdr)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let hdr = std::fs::read_to_string(sidecar_path(path))?;
        let mut sample_rate = None;
        let mut num_samples = None;
        for (i, line) in hdr.lines().enumerate() {
            if let Some(v) = line.strip_prefix("sample_rate=") {
                sample_rate = Some(v.parse::<u32>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: "bad sample_rate".into(),
                })?);
            } else if let Some(v) = line.strip_prefix("num_samples=") {
                num_samples = Some(v.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: "bad num_samples".into(),
                })?);
            }
        }
        let (Some(sample_rate), Some(num_samples)) = (sample_rate, num_samples) else {
            return Err(Error::Parse {
                line: 1,
                message: "sidecar header missing sample_rate or num_samples".into(),
            });
        };
        let bytes = std::fs::read(path)?;
        if bytes.len() != num_samples * 8 {
            return Err(Error::Feature(format!(
                "{}: payload {} bytes, header claims {} samples",
                path.display(),
                bytes.len(),
                num_samples
            )));
        }
        let samples = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Waveform::new(samples, sample_rate)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".hdr");
    s.into()
}
