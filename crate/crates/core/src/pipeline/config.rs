use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Model/LM size preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Laptop-sized dimensions for fast experiments.
    Desk,
    /// Full-size dimensions (12/6-layer Transformer, 2x512 LSTM LM).
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(config_err("preset", format!("unknown preset `{}`", other))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }
}

/// Which corpus a `train` run fits from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainSet {
    Adult,
    Child,
}

impl TrainSet {
    pub fn name(&self) -> &'static str {
        match self {
            TrainSet::Adult => "adult",
            TrainSet::Child => "child",
        }
    }
}

/// Which expansion of the child training set the trainers consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentedSet {
    /// The dry recordings, one copy per utterance.
    Off,
    /// Three-way speed perturbation only.
    Speed,
    /// Speed, volume and reverberation perturbation.
    Full,
}

impl AugmentedSet {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentedSet::Off => "off",
            AugmentedSet::Speed => "speed",
            AugmentedSet::Full => "full",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusSizes {
    pub speakers_a: usize,
    pub utts_a: usize,
    pub speakers_c1: usize,
    pub utts_c1: usize,
    pub speakers_c2: usize,
    pub utts_c2: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

#[derive(Debug, Clone)]
pub struct AugmentSettings {
    pub speed: Vec<f64>,
    /// Gain range in dB; None disables volume perturbation in the full set.
    pub volume_db: Option<(f64, f64)>,
    pub rir: bool,
    pub specaug: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub set: TrainSet,
    pub epochs: usize,
    pub lambda: f64,
    pub batch: usize,
    pub lr: f64,
    pub smoothing: f64,
    pub augmented: AugmentedSet,
}

#[derive(Debug, Clone)]
pub struct LmSettings {
    pub order: usize,
    pub rnn_epochs: usize,
    pub rnn_lr: f64,
}

#[derive(Debug, Clone)]
pub struct DecodeSettings {
    pub model: String,
    pub beam: usize,
    pub ctc_weight: f64,
    pub lm_weight: f64,
    pub nbest: usize,
    pub max_len_ratio: f64,
}

/// Fully-resolved pipeline settings, read from a plain `key = value` file.
/// Unknown keys are rejected so typos cannot silently fall back to
/// defaults; `render` reproduces the complete resolved state for run logs.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub root: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub preset: Preset,
    pub corpus: CorpusSizes,
    pub augment: AugmentSettings,
    pub train: TrainSettings,
    pub transfer_epochs: usize,
    pub lm: LmSettings,
    pub decode: DecodeSettings,
    pub rescore_weight: f64,
    pub score_input: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            root: PathBuf::from("work"),
            seed: 17,
            workers: 0,
            preset: Preset::Desk,
            corpus: CorpusSizes {
                speakers_a: 40,
                utts_a: 25,
                speakers_c1: 10,
                utts_c1: 20,
                speakers_c2: 5,
                utts_c2: 20,
                min_tokens: 3,
                max_tokens: 8,
            },
            augment: AugmentSettings {
                speed: vec![0.9, 1.0, 1.1],
                volume_db: Some((-3.0, 3.0)),
                rir: true,
                specaug: true,
            },
            train: TrainSettings {
                set: TrainSet::Child,
                epochs: 8,
                lambda: 0.3,
                batch: 8,
                lr: 3e-3,
                smoothing: 0.0,
                augmented: AugmentedSet::Speed,
            },
            transfer_epochs: 5,
            lm: LmSettings {
                order: 3,
                rnn_epochs: 5,
                rnn_lr: 3e-3,
            },
            decode: DecodeSettings {
                model: "transfer".to_string(),
                beam: 8,
                ctc_weight: 0.3,
                lm_weight: 0.0,
                nbest: 8,
                max_len_ratio: 1.0,
            },
            rescore_weight: 0.5,
            score_input: "nbest".to_string(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| config_err(key, format!("cannot parse `{}`", v)))
}

fn parse_switch(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(config_err(key, format!("expected on/off, got `{}`", other))),
    }
}

fn render_switch(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl PipelineConfig {
    /// Parses one `key = value` line per setting; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{}`", line),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::MissingDependency(format!("config file `{}`: {}", path.display(), e))
        })?;
        PipelineConfig::from_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "root" => self.root = PathBuf::from(value),
            "seed" => self.seed = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            "preset" => self.preset = Preset::parse(value)?,
            "corpus.speakers_a" => self.corpus.speakers_a = parse_num(key, value)?,
            "corpus.utts_a" => self.corpus.utts_a = parse_num(key, value)?,
            "corpus.speakers_c1" => self.corpus.speakers_c1 = parse_num(key, value)?,
            "corpus.utts_c1" => self.corpus.utts_c1 = parse_num(key, value)?,
            "corpus.speakers_c2" => self.corpus.speakers_c2 = parse_num(key, value)?,
            "corpus.utts_c2" => self.corpus.utts_c2 = parse_num(key, value)?,
            "corpus.min_tokens" => self.corpus.min_tokens = parse_num(key, value)?,
            "corpus.max_tokens" => self.corpus.max_tokens = parse_num(key, value)?,
            "augment.speed" => {
                let factors: Result<Vec<f64>> =
                    value.split(',').map(|p| parse_num(key, p.trim())).collect();
                self.augment.speed = factors?;
            }
            "augment.volume_db" => {
                self.augment.volume_db = if value == "off" {
                    None
                } else {
                    let (lo, hi) = value
                        .split_once(',')
                        .ok_or_else(|| config_err(key, "expected `lo,hi` or `off`"))?;
                    Some((parse_num(key, lo.trim())?, parse_num(key, hi.trim())?))
                };
            }
            "augment.rir" => self.augment.rir = parse_switch(key, value)?,
            "augment.specaug" => self.augment.specaug = parse_switch(key, value)?,
            "train.set" => {
                self.train.set = match value {
                    "adult" => TrainSet::Adult,
                    "child" => TrainSet::Child,
                    other => {
                        return Err(config_err(key, format!("expected adult/child, got `{}`", other)))
                    }
                }
            }
            "train.epochs" => self.train.epochs = parse_num(key, value)?,
            "train.lambda" => self.train.lambda = parse_num(key, value)?,
            "train.batch" => self.train.batch = parse_num(key, value)?,
            "train.lr" => self.train.lr = parse_num(key, value)?,
            "train.smoothing" => self.train.smoothing = parse_num(key, value)?,
            "train.augmented" => {
                self.train.augmented = match value {
                    "off" => AugmentedSet::Off,
                    "speed" => AugmentedSet::Speed,
                    "full" => AugmentedSet::Full,
                    other => {
                        return Err(config_err(
                            key,
                            format!("expected off/speed/full, got `{}`", other),
                        ))
                    }
                }
            }
            "transfer.epochs" => self.transfer_epochs = parse_num(key, value)?,
            "lm.order" => self.lm.order = parse_num(key, value)?,
            "lm.rnn_epochs" => self.lm.rnn_epochs = parse_num(key, value)?,
            "lm.rnn_lr" => self.lm.rnn_lr = parse_num(key, value)?,
            "decode.model" => self.decode.model = value.to_string(),
            "decode.beam" => self.decode.beam = parse_num(key, value)?,
            "decode.ctc_weight" => self.decode.ctc_weight = parse_num(key, value)?,
            "decode.lm_weight" => self.decode.lm_weight = parse_num(key, value)?,
            "decode.nbest" => self.decode.nbest = parse_num(key, value)?,
            "decode.max_len_ratio" => self.decode.max_len_ratio = parse_num(key, value)?,
            "rescore.weight" => self.rescore_weight = parse_num(key, value)?,
            "score.input" => self.score_input = value.to_string(),
            other => return Err(config_err(other, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.train.lambda) {
            return Err(config_err("train.lambda", "must lie in [0, 1]"));
        }
        if self.train.epochs == 0 || self.transfer_epochs == 0 {
            return Err(config_err("train.epochs", "epoch counts must be positive"));
        }
        if self.train.batch == 0 {
            return Err(config_err("train.batch", "batch size must be positive"));
        }
        if self.corpus.min_tokens == 0 || self.corpus.min_tokens > self.corpus.max_tokens {
            return Err(config_err(
                "corpus.min_tokens",
                "need 0 < min_tokens <= max_tokens",
            ));
        }
        if self.augment.speed.is_empty() || self.augment.speed.iter().any(|&f| f <= 0.0) {
            return Err(config_err("augment.speed", "factors must be positive"));
        }
        if self.lm.order == 0 {
            return Err(config_err("lm.order", "order must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rescore_weight) {
            return Err(config_err("rescore.weight", "must lie in [0, 1]"));
        }
        if !matches!(self.score_input.as_str(), "nbest" | "rescored") {
            return Err(config_err("score.input", "expected nbest or rescored"));
        }
        Ok(())
    }

    /// The complete resolved state, in the accepted key syntax.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let kv = |out: &mut String, k: &str, v: String| {
            let _ = writeln!(out, "{} = {}", k, v);
        };
        kv(&mut out, "root", self.root.display().to_string());
        kv(&mut out, "seed", self.seed.to_string());
        kv(&mut out, "workers", self.workers.to_string());
        kv(&mut out, "preset", self.preset.name().to_string());
        kv(&mut out, "corpus.speakers_a", self.corpus.speakers_a.to_string());
        kv(&mut out, "corpus.utts_a", self.corpus.utts_a.to_string());
        kv(&mut out, "corpus.speakers_c1", self.corpus.speakers_c1.to_string());
        kv(&mut out, "corpus.utts_c1", self.corpus.utts_c1.to_string());
        kv(&mut out, "corpus.speakers_c2", self.corpus.speakers_c2.to_string());
        kv(&mut out, "corpus.utts_c2", self.corpus.utts_c2.to_string());
        kv(&mut out, "corpus.min_tokens", self.corpus.min_tokens.to_string());
        kv(&mut out, "corpus.max_tokens", self.corpus.max_tokens.to_string());
        let speed: Vec<String> = self.augment.speed.iter().map(|f| f.to_string()).collect();
        kv(&mut out, "augment.speed", speed.join(","));
        kv(
            &mut out,
            "augment.volume_db",
            match self.augment.volume_db {
                Some((lo, hi)) => format!("{},{}", lo, hi),
                None => "off".to_string(),
            },
        );
        kv(&mut out, "augment.rir", render_switch(self.augment.rir).into());
        kv(&mut out, "augment.specaug", render_switch(self.augment.specaug).into());
        kv(&mut out, "train.set", self.train.set.name().to_string());
        kv(&mut out, "train.epochs", self.train.epochs.to_string());
        kv(&mut out, "train.lambda", self.train.lambda.to_string());
        kv(&mut out, "train.batch", self.train.batch.to_string());
        kv(&mut out, "train.lr", self.train.lr.to_string());
        kv(&mut out, "train.smoothing", self.train.smoothing.to_string());
        kv(&mut out, "train.augmented", self.train.augmented.name().to_string());
        kv(&mut out, "transfer.epochs", self.transfer_epochs.to_string());
        kv(&mut out, "lm.order", self.lm.order.to_string());
        kv(&mut out, "lm.rnn_epochs", self.lm.rnn_epochs.to_string());
        kv(&mut out, "lm.rnn_lr", self.lm.rnn_lr.to_string());
        kv(&mut out, "decode.model", self.decode.model.clone());
        kv(&mut out, "decode.beam", self.decode.beam.to_string());
        kv(&mut out, "decode.ctc_weight", self.decode.ctc_weight.to_string());
        kv(&mut out, "decode.lm_weight", self.decode.lm_weight.to_string());
        kv(&mut out, "decode.nbest", self.decode.nbest.to_string());
        kv(&mut out, "decode.max_len_ratio", self.decode.max_len_ratio.to_string());
        kv(&mut out, "rescore.weight", self.rescore_weight.to_string());
        kv(&mut out, "score.input", self.score_input.clone());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_render() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_text(&cfg.render()).unwrap();
        assert_eq!(back.render(), cfg.render());
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = PipelineConfig::from_text("train.epoches = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train.epoches"), "{}", msg);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg =
            PipelineConfig::from_text("# a comment\n\nseed = 5  # trailing\ntrain.epochs = 2\n")
                .unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.train.epochs, 2);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let err = PipelineConfig::from_text("seed = 5\nnot a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{}", err);
    }

    #[test]
    fn out_of_range_lambda_names_the_key() {
        let err = PipelineConfig::from_text("train.lambda = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("train.lambda"), "{}", err);
    }

    #[test]
    fn volume_accepts_off_and_range() {
        let off = PipelineConfig::from_text("augment.volume_db = off\n").unwrap();
        assert_eq!(off.augment.volume_db, None);
        let rng = PipelineConfig::from_text("augment.volume_db = -6, 2\n").unwrap();
        assert_eq!(rng.augment.volume_db, Some((-6.0, 2.0)));
    }
}
