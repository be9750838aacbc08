use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::augment::{expand_training_set, synth_rir, AugmentPolicy, SpecAugmentConfig};
use crate::decode::{decode_corpus, read_best_hypotheses, DecodeConfig};
use crate::error::{Error, Result};
use crate::frontend::{
    extract_features, generate_corpus, CorpusConfig, FeatureSequence, SetConfig, Waveform,
    DEFAULT_N_MELS,
};
use crate::lm::{
    interpolate, perplexity, read_arpa, rescore_nbest, train_ngram, train_rnnlm, write_arpa,
    CharLm, InterpolatedLm, NBestHyp, NgramFusion, RnnLm, RnnLmConfig, BOS, EOS, LM_UNK,
};
use crate::model::{
    check_config, init_params, train, transfer_learn, write_epoch_log, ModelConfig, TrainConfig,
    Utterance,
};
use crate::pipeline::config::{AugmentedSet, PipelineConfig, Preset, TrainSet};
use crate::score::{score_corpus, ScoreReport};
use crate::tensor::rng::derive_seed;
use crate::tensor::{load_params, save_params, AdamConfig};
use crate::text::{build_vocab, partition, tokenize_chars, Manifest, Subset, Vocabulary};

/// Log-mel plus pitch dimensionality produced by the feature extractor.
const FEATURE_DIM: usize = DEFAULT_N_MELS + 3;

/// Artifact locations under the pipeline root directory.
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Layout {
            root: cfg.root.clone(),
        }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn corpus_manifest(&self) -> PathBuf {
        self.corpus_dir().join("manifest.tsv")
    }

    pub fn prep_dir(&self) -> PathBuf {
        self.root.join("prep")
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.prep_dir().join("vocab.txt")
    }

    pub fn set_manifest(&self, name: &str) -> PathBuf {
        self.prep_dir().join(format!("{}.tsv", name))
    }

    pub fn feats_dir(&self) -> PathBuf {
        self.root.join("feats")
    }

    pub fn aug_dir(&self, name: &str) -> PathBuf {
        self.root.join(format!("aug_{}", name))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model_ckpt(&self, name: &str) -> PathBuf {
        self.models_dir().join(format!("{}.ckpt", name))
    }

    pub fn model_log(&self, name: &str) -> PathBuf {
        self.models_dir().join(format!("{}.log", name))
    }

    pub fn lm_dir(&self) -> PathBuf {
        self.root.join("lm")
    }

    pub fn decode_dir(&self) -> PathBuf {
        self.root.join("decode")
    }

    pub fn nbest_path(&self, model: &str) -> PathBuf {
        self.decode_dir().join(format!("{}.nbest.tsv", model))
    }

    pub fn rescored_path(&self, model: &str) -> PathBuf {
        self.decode_dir().join(format!("{}.rescored.tsv", model))
    }

    pub fn score_dir(&self) -> PathBuf {
        self.root.join("score")
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn results_path(&self) -> PathBuf {
        self.root.join("results.txt")
    }
}

fn stage_seed(cfg: &PipelineConfig, stage: &str) -> u64 {
    derive_seed(cfg.seed, &format!("stage:{}", stage))
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingDependency(format!(
            "`{}` not found; run `{}` first",
            path.display(),
            produced_by
        )))
    }
}

/// Records the resolved config and the produced files for one command
/// under `<root>/logs/`.
fn log_stage(cfg: &PipelineConfig, stage: &str, files: &[PathBuf]) -> Result<()> {
    let lay = Layout::new(cfg);
    std::fs::create_dir_all(lay.logs_dir())?;
    std::fs::write(lay.logs_dir().join(format!("{}.config", stage)), cfg.render())?;
    let mut rels: Vec<String> = files
        .iter()
        .map(|p| {
            p.strip_prefix(&cfg.root)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    rels.sort();
    rels.dedup();
    std::fs::write(
        lay.logs_dir().join(format!("{}.files", stage)),
        rels.join("\n") + "\n",
    )?;
    Ok(())
}

fn manifest_files(root: &Path, manifest: &Manifest) -> Vec<PathBuf> {
    manifest
        .records()
        .iter()
        .map(|r| root.join(&r.audio_path))
        .collect()
}

pub fn run_gen_corpus(cfg: &PipelineConfig) -> Result<()> {
    let lay = Layout::new(cfg);
    let set = |speakers, utts| SetConfig {
        speakers,
        utts_per_speaker: utts,
        min_tokens: cfg.corpus.min_tokens,
        max_tokens: cfg.corpus.max_tokens,
    };
    let corpus_cfg = CorpusConfig {
        out_dir: lay.corpus_dir(),
        set_a: set(cfg.corpus.speakers_a, cfg.corpus.utts_a),
        set_c1: set(cfg.corpus.speakers_c1, cfg.corpus.utts_c1),
        set_c2: set(cfg.corpus.speakers_c2, cfg.corpus.utts_c2),
        noise_floor: 0.002,
        seed: stage_seed(cfg, "gen-corpus"),
    };
    let manifest = generate_corpus(&corpus_cfg)?;
    let mut files = manifest_files(&lay.corpus_dir(), &manifest);
    files.push(lay.corpus_manifest());
    log_stage(cfg, "gen-corpus", &files)
}

fn speed_only_policy(cfg: &PipelineConfig) -> AugmentPolicy {
    AugmentPolicy {
        speed_factors: cfg.augment.speed.clone(),
        volume_range_db: None,
        rir_pool: Vec::new(),
        specaug: SpecAugmentConfig::disabled(),
    }
}

fn full_policy(cfg: &PipelineConfig, seed: u64) -> Result<AugmentPolicy> {
    let rir_pool = if cfg.augment.rir {
        (0..3)
            .map(|i| {
                synth_rir(
                    0.08 + 0.04 * i as f64,
                    16000,
                    derive_seed(seed, &format!("rir:{}", i)),
                )
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(AugmentPolicy {
        speed_factors: cfg.augment.speed.clone(),
        volume_range_db: cfg.augment.volume_db,
        rir_pool,
        specaug: SpecAugmentConfig::disabled(),
    })
}

/// Feature extraction, vocabulary construction, speaker-disjoint
/// partitioning and static augmentation of the child training set.
pub fn run_prep(cfg: &PipelineConfig) -> Result<()> {
    let lay = Layout::new(cfg);
    require(&lay.corpus_manifest(), "gen-corpus")?;
    let manifest = Manifest::load(&lay.corpus_manifest())?;
    let seed = stage_seed(cfg, "prep");
    let mut files = Vec::new();

    // speaker-level splits: adult train/valid, child train/valid/test
    let adult = manifest.filter(|r| r.subset == Subset::A);
    let child = manifest.filter(|r| r.subset != Subset::A);
    let (a_train, a_v1, a_v2) = partition(&adult, (0.8, 0.1, 0.1), derive_seed(seed, "split:adult"))?;
    let mut a_valid = a_v1;
    for r in a_v2.records() {
        a_valid.push(r.clone())?;
    }
    let (c_train, c_valid, c_test) =
        partition(&child, (0.6, 0.2, 0.2), derive_seed(seed, "split:child"))?;
    std::fs::create_dir_all(lay.prep_dir())?;
    for (name, m) in [
        ("adult_train", &a_train),
        ("adult_valid", &a_valid),
        ("child_train", &c_train),
        ("child_valid", &c_valid),
        ("child_test", &c_test),
    ] {
        let path = lay.set_manifest(name);
        m.save(&path)?;
        files.push(path);
    }

    let vocab = build_vocab(&[&manifest])?;
    vocab.save(&lay.vocab_path())?;
    files.push(lay.vocab_path());

    // feature cache for the dry recordings
    std::fs::create_dir_all(lay.feats_dir())?;
    let feat_results: Vec<Result<PathBuf>> = manifest
        .records()
        .par_iter()
        .map(|r| {
            let w = Waveform::load(&lay.corpus_dir().join(&r.audio_path))?;
            let f = extract_features(&w, &r.utt_id)?;
            let path = lay.feats_dir().join(format!("{}.feat", r.utt_id));
            f.save(&path)?;
            Ok(path)
        })
        .collect();
    for r in feat_results {
        files.push(r?);
    }

    // static child-training expansions: speed-only and fully augmented
    for (name, policy) in [
        ("speed", speed_only_policy(cfg)),
        ("full", full_policy(cfg, seed)?),
    ] {
        let out_root = lay.aug_dir(name);
        let expanded = expand_training_set(
            &c_train,
            &policy,
            &lay.corpus_dir(),
            &out_root,
            derive_seed(seed, &format!("augment:{}", name)),
        )?;
        expanded.save(&out_root.join("manifest.tsv"))?;
        files.extend(manifest_files(&out_root, &expanded));
        files.push(out_root.join("manifest.tsv"));
    }
    log_stage(cfg, "prep", &files)
}

fn load_vocab(lay: &Layout) -> Result<Vocabulary> {
    require(&lay.vocab_path(), "prep")?;
    Vocabulary::load(&lay.vocab_path())
}

/// Loads a manifest into feature/token pairs, using the prep feature cache
/// when one exists and extracting from audio otherwise.
fn load_utterances(
    manifest: &Manifest,
    audio_root: &Path,
    feats_dir: Option<&Path>,
    vocab: &Vocabulary,
) -> Result<Vec<Utterance>> {
    manifest
        .records()
        .par_iter()
        .map(|r| {
            let cached = feats_dir
                .map(|d| d.join(format!("{}.feat", r.utt_id)))
                .filter(|p| p.exists());
            let feats = match cached {
                Some(p) => FeatureSequence::load(&p, &r.utt_id)?,
                None => extract_features(&Waveform::load(&audio_root.join(&r.audio_path))?, &r.utt_id)?,
            };
            Ok(Utterance {
                feats,
                tokens: tokenize_chars(&r.transcript, vocab),
            })
        })
        .collect()
}

fn load_split(lay: &Layout, name: &str, vocab: &Vocabulary) -> Result<Vec<Utterance>> {
    let path = lay.set_manifest(name);
    require(&path, "prep")?;
    load_utterances(
        &Manifest::load(&path)?,
        &lay.corpus_dir(),
        Some(&lay.feats_dir()),
        vocab,
    )
}

/// The child training material for the configured augmentation level.
fn load_child_train(
    lay: &Layout,
    augset: AugmentedSet,
    vocab: &Vocabulary,
) -> Result<Vec<Utterance>> {
    match augset {
        AugmentedSet::Off => load_split(lay, "child_train", vocab),
        AugmentedSet::Speed | AugmentedSet::Full => {
            let root = lay.aug_dir(augset.name());
            let path = root.join("manifest.tsv");
            require(&path, "prep")?;
            load_utterances(&Manifest::load(&path)?, &root, None, vocab)
        }
    }
}

fn model_config(cfg: &PipelineConfig, vocab: &Vocabulary) -> ModelConfig {
    match cfg.preset {
        Preset::Desk => ModelConfig::desk(vocab.len(), FEATURE_DIM),
        Preset::Paper => ModelConfig::full(vocab.len(), FEATURE_DIM),
    }
}

fn train_config(cfg: &PipelineConfig, epochs: usize, augset: AugmentedSet, seed: u64) -> TrainConfig {
    let specaug = if cfg.augment.specaug && augset == AugmentedSet::Full {
        SpecAugmentConfig::default()
    } else {
        SpecAugmentConfig::disabled()
    };
    TrainConfig {
        lambda: cfg.train.lambda,
        epochs,
        batch_size: cfg.train.batch,
        adam: AdamConfig {
            lr: cfg.train.lr,
            ..AdamConfig::default()
        },
        label_smoothing: cfg.train.smoothing,
        specaug,
        seed,
        checkpoint_dir: None,
    }
}

/// Fits a recognizer from scratch on the configured set (`train.set`)
/// and writes `<root>/models/<set>.ckpt` plus its epoch log.
pub fn run_train(cfg: &PipelineConfig) -> Result<()> {
    let lay = Layout::new(cfg);
    let vocab = load_vocab(&lay)?;
    let name = cfg.train.set.name();
    let seed = stage_seed(cfg, &format!("train:{}", name));
    let (augset, train_set, valid_set) = match cfg.train.set {
        TrainSet::Adult => (
            AugmentedSet::Off,
            load_split(&lay, "adult_train", &vocab)?,
            load_split(&lay, "adult_valid", &vocab)?,
        ),
        TrainSet::Child => (
            cfg.train.augmented,
            load_child_train(&lay, cfg.train.augmented, &vocab)?,
            load_split(&lay, "child_valid", &vocab)?,
        ),
    };
    let mconfig = model_config(cfg, &vocab);
    let mut params = init_params(&mconfig, derive_seed(seed, "init"))?;
    let tc = train_config(cfg, cfg.train.epochs, augset, derive_seed(seed, "epochs"));
    let stats = train(&mut params, &mconfig, &tc, &train_set, &valid_set)?;
    std::fs::create_dir_all(lay.models_dir())?;
    save_params(&params, &lay.model_ckpt(name))?;
    write_epoch_log(&stats, &lay.model_log(name))?;
    log_stage(
        cfg,
        &format!("train-{}", name),
        &[lay.model_ckpt(name), lay.model_log(name)],
    )
}

fn transfer_variant(cfg: &PipelineConfig, augset: AugmentedSet, out_name: &str) -> Result<()> {
    let lay = Layout::new(cfg);
    let vocab = load_vocab(&lay)?;
    require(&lay.model_ckpt("adult"), "train (with train.set = adult)")?;
    let mut params = load_params(&lay.model_ckpt("adult"))?;
    let train_set = load_child_train(&lay, augset, &vocab)?;
    let valid_set = load_split(&lay, "child_valid", &vocab)?;
    let mconfig = model_config(cfg, &vocab);
    let seed = stage_seed(cfg, out_name);
    let tc = train_config(cfg, cfg.transfer_epochs, augset, derive_seed(seed, "epochs"));
    let stats = transfer_learn(&mut params, &mconfig, &tc, &train_set, &valid_set)?;
    std::fs::create_dir_all(lay.models_dir())?;
    save_params(&params, &lay.model_ckpt(out_name))?;
    write_epoch_log(&stats, &lay.model_log(out_name))?;
    log_stage(
        cfg,
        out_name,
        &[lay.model_ckpt(out_name), lay.model_log(out_name)],
    )
}

/// Retrains the adult model on the child training set (all parameters).
pub fn run_transfer(cfg: &PipelineConfig) -> Result<()> {
    transfer_variant(cfg, cfg.train.augmented, "transfer")
}

fn to_sentences(m: &Manifest) -> Vec<Vec<String>> {
    m.records()
        .iter()
        .map(|r| {
            r.transcript
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| c.to_string())
                .collect()
        })
        .collect()
}

fn rnn_config(preset: Preset) -> RnnLmConfig {
    match preset {
        Preset::Desk => RnnLmConfig::desk(),
        Preset::Paper => RnnLmConfig::full(),
    }
}

/// Adult and child backoff n-grams (ARPA), interpolation weights picked on
/// the child validation set, and an LSTM LM for second-pass rescoring.
pub fn run_train_lm(cfg: &PipelineConfig) -> Result<()> {
    let lay = Layout::new(cfg);
    for name in ["adult_train", "child_train", "child_valid"] {
        require(&lay.set_manifest(name), "prep")?;
    }
    let adult_sents = to_sentences(&Manifest::load(&lay.set_manifest("adult_train"))?);
    let child_sents = to_sentences(&Manifest::load(&lay.set_manifest("child_train"))?);
    let dev_sents = to_sentences(&Manifest::load(&lay.set_manifest("child_valid"))?);
    let seed = stage_seed(cfg, "train-lm");

    let mut chars: BTreeSet<&String> = BTreeSet::new();
    for sent in adult_sents.iter().chain(&child_sents) {
        chars.extend(sent.iter());
    }
    let lm_vocab: Vec<String> = chars.into_iter().cloned().collect();

    std::fs::create_dir_all(lay.lm_dir())?;
    let adult_lm = train_ngram(&adult_sents, cfg.lm.order, &lm_vocab)?;
    let child_lm = train_ngram(&child_sents, cfg.lm.order, &lm_vocab)?;
    write_arpa(&adult_lm, &lay.lm_dir().join("adult.arpa"))?;
    write_arpa(&child_lm, &lay.lm_dir().join("child.arpa"))?;

    let mut report = String::new();
    let _ = writeln!(report, "adult dev ppl\t{:.4}", perplexity(&adult_lm, &dev_sents));
    let _ = writeln!(report, "child dev ppl\t{:.4}", perplexity(&child_lm, &dev_sents));
    let mix = interpolate(vec![adult_lm, child_lm], &dev_sents)?;
    let _ = writeln!(report, "interpolated dev ppl\t{:.4}", mix.perplexity(&dev_sents));
    std::fs::write(
        lay.lm_dir().join("interp.txt"),
        format!("adult\t{:.6}\nchild\t{:.6}\n", mix.weights[0], mix.weights[1]),
    )?;

    let mut tokens = vec![BOS.to_string(), EOS.to_string(), LM_UNK.to_string()];
    tokens.extend(lm_vocab.iter().cloned());
    let mut rnn = RnnLm::new(tokens, rnn_config(cfg.preset), derive_seed(seed, "rnn-init"))?;
    let mut lm_train = adult_sents;
    lm_train.extend(child_sents);
    let history = train_rnnlm(
        &mut rnn,
        &lm_train,
        &dev_sents,
        cfg.lm.rnn_epochs,
        &AdamConfig {
            lr: cfg.lm.rnn_lr,
            ..AdamConfig::default()
        },
        derive_seed(seed, "rnn-train"),
    )?;
    for (epoch, ppl) in &history {
        let _ = writeln!(report, "rnn epoch {} dev ppl\t{:.4}", epoch, ppl);
    }
    save_params(&rnn.params, &lay.lm_dir().join("rnn.ckpt"))?;
    std::fs::write(lay.lm_dir().join("rnn.tokens"), rnn.tokens().join("\n") + "\n")?;
    std::fs::write(lay.lm_dir().join("lm.log"), report)?;

    let files: Vec<PathBuf> = ["adult.arpa", "child.arpa", "interp.txt", "rnn.ckpt", "rnn.tokens", "lm.log"]
        .iter()
        .map(|f| lay.lm_dir().join(f))
        .collect();
    log_stage(cfg, "train-lm", &files)
}

fn load_interpolated(lay: &Layout) -> Result<InterpolatedLm> {
    for f in ["adult.arpa", "child.arpa", "interp.txt"] {
        require(&lay.lm_dir().join(f), "train-lm")?;
    }
    let adult = read_arpa(&lay.lm_dir().join("adult.arpa"))?;
    let child = read_arpa(&lay.lm_dir().join("child.arpa"))?;
    let text = std::fs::read_to_string(lay.lm_dir().join("interp.txt"))?;
    let mut weights = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (_, w) = line.split_once('\t').ok_or(Error::Parse {
            line: i + 1,
            message: "expected `component\\tweight`".into(),
        })?;
        weights.push(w.trim().parse::<f64>().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("non-numeric weight `{}`", w),
        })?);
    }
    InterpolatedLm::new(vec![adult, child], weights)
}

fn load_rnnlm(lay: &Layout) -> Result<RnnLm> {
    require(&lay.lm_dir().join("rnn.ckpt"), "train-lm")?;
    require(&lay.lm_dir().join("rnn.tokens"), "train-lm")?;
    let tokens: Vec<String> = std::fs::read_to_string(lay.lm_dir().join("rnn.tokens"))?
        .lines()
        .map(|l| l.to_string())
        .collect();
    let params = load_params(&lay.lm_dir().join("rnn.ckpt"))?;
    let config = RnnLmConfig {
        embed_dim: params.get("embed")?.cols(),
        hidden: params.get("l0.wh")?.rows(),
        layers: params.names().iter().filter(|n| n.ends_with(".wx")).count(),
    };
    let mut lm = RnnLm::new(tokens, config, 0)?;
    lm.params = params;
    Ok(lm)
}

/// First-pass joint beam decoding of the child test set, optionally with
/// shallow n-gram fusion, writing `<root>/decode/<model>.nbest.tsv`.
pub fn run_decode(cfg: &PipelineConfig) -> Result<()> {
    let lay = Layout::new(cfg);
    let vocab = load_vocab(&lay)?;
    let model = &cfg.decode.model;
    require(&lay.model_ckpt(model), "train or transfer")?;
    let params = load_params(&lay.model_ckpt(model))?;
    let test_path = lay.set_manifest("child_test");
    require(&test_path, "prep")?;
    let test = Manifest::load(&test_path)?;
    let mconfig = model_config(cfg, &vocab);
    check_config(&params, &mconfig)?;
    let dcfg = DecodeConfig {
        beam_width: cfg.decode.beam,
        ctc_weight: cfg.decode.ctc_weight,
        lm_weight: cfg.decode.lm_weight,
        max_len_ratio: cfg.decode.max_len_ratio,
        nbest: cfg.decode.nbest,
    };
    std::fs::create_dir_all(lay.decode_dir())?;
    let out = lay.nbest_path(model);
    if cfg.decode.lm_weight > 0.0 {
        let mix = load_interpolated(&lay)?;
        let fusion = NgramFusion::new(CharLm::Mixture(&mix), &vocab);
        decode_corpus(
            &test,
            &lay.corpus_dir(),
            &params,
            &mconfig,
            &vocab,
            Some(&fusion),
            &dcfg,
            &out,
        )?;
    } else {
        decode_corpus(
            &test,
            &lay.corpus_dir(),
            &params,
            &mconfig,
            &vocab,
            None,
            &dcfg,
            &out,
        )?;
    }
    log_stage(cfg, "decode", &[out])
}

/// Re-ranks the first-pass N-best lists with the LSTM LM; the configured
/// weight mixes it against the first-pass n-gram contribution.
pub fn run_rescore(cfg: &PipelineConfig) -> Result<()> {
    let lay = Layout::new(cfg);
    let model = &cfg.decode.model;
    let nbest_path = lay.nbest_path(model);
    require(&nbest_path, "decode")?;
    let rnn = load_rnnlm(&lay)?;
    let beta = cfg.decode.lm_weight;

    // regroup per utterance, preserving file order
    let text = std::fs::read_to_string(&nbest_path)?;
    let mut groups: Vec<(String, Vec<(NBestHyp, f64, f64)>)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 7 columns, found {}", cols.len()),
            });
        }
        let num = |j: usize| -> Result<f64> {
            cols[j].parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("non-numeric field `{}`", cols[j]),
            })
        };
        let lm_part = beta * num(5)?;
        let hyp = NBestHyp {
            utt_id: cols[0].to_string(),
            rank: cols[1].parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("non-numeric rank `{}`", cols[1]),
            })?,
            text: cols[6].to_string(),
            acoustic: num(2)? - lm_part,
            firstpass_lm: lm_part,
        };
        let row = (hyp, num(3)?, num(4)?);
        match groups.last_mut() {
            Some((id, rows)) if *id == cols[0] => rows.push(row),
            _ => groups.push((cols[0].to_string(), vec![row])),
        }
    }

    let mut out = String::from("utt_id\trank\tcombined\tctc\tatt\tlm\ttext\n");
    for (utt_id, rows) in &groups {
        let hyps: Vec<NBestHyp> = rows.iter().map(|(h, _, _)| h.clone()).collect();
        let rescored = rescore_nbest(&hyps, &rnn, cfg.rescore_weight)?;
        for (rank, r) in rescored.iter().enumerate() {
            // carry the first-pass ctc/att decomposition across the re-sort
            let (_, ctc, att) = &rows[r.hyp.rank - 1];
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                utt_id,
                rank + 1,
                r.score,
                ctc,
                att,
                r.rnn_log_prob,
                r.hyp.text
            );
        }
    }
    let out_path = lay.rescored_path(model);
    std::fs::create_dir_all(lay.decode_dir())?;
    std::fs::write(&out_path, out)?;
    log_stage(cfg, "rescore", &[out_path])
}

/// Scores the configured hypothesis file against the child test references
/// and writes the per-speaker/per-subset breakdown.
pub fn run_score(cfg: &PipelineConfig) -> Result<ScoreReport> {
    let lay = Layout::new(cfg);
    let model = &cfg.decode.model;
    let hyp_path = match cfg.score_input.as_str() {
        "rescored" => lay.rescored_path(model),
        _ => lay.nbest_path(model),
    };
    require(
        &hyp_path,
        if cfg.score_input == "rescored" {
            "rescore"
        } else {
            "decode"
        },
    )?;
    let test_path = lay.set_manifest("child_test");
    require(&test_path, "prep")?;
    let test = Manifest::load(&test_path)?;
    let hyps = read_best_hypotheses(&hyp_path)?;
    let report = score_corpus(&test, &hyps, "<unk>", false)?;
    std::fs::create_dir_all(lay.score_dir())?;
    let out = lay
        .score_dir()
        .join(format!("{}.{}.tsv", model, cfg.score_input));
    report.save_tsv(&out)?;
    println!("{}", report.render_text());
    log_stage(cfg, "score", &[out])?;
    Ok(report)
}

/// End-to-end reproduction run: corpus, preparation, the three training
/// strategies, language models, and decode/score passes for the strategy
/// comparison and the augmentation/LM ablation. Writes
/// `<root>/results.txt`; identical config and seed give identical bytes.
pub fn run_reproduce(cfg: &PipelineConfig) -> Result<()> {
    let lay = Layout::new(cfg);
    run_gen_corpus(cfg)?;
    run_prep(cfg)?;

    let mut adult_cfg = cfg.clone();
    adult_cfg.train.set = TrainSet::Adult;
    run_train(&adult_cfg)?;
    let mut child_cfg = cfg.clone();
    child_cfg.train.set = TrainSet::Child;
    run_train(&child_cfg)?;
    run_transfer(cfg)?;
    transfer_variant(cfg, AugmentedSet::Full, "transfer_full")?;
    run_train_lm(cfg)?;

    let score_model = |model: &str, lm_weight: f64, rescored: bool| -> Result<ScoreReport> {
        let mut c = cfg.clone();
        c.decode.model = model.to_string();
        c.decode.lm_weight = lm_weight;
        run_decode(&c)?;
        if rescored {
            run_rescore(&c)?;
            c.score_input = "rescored".to_string();
        } else {
            c.score_input = "nbest".to_string();
        }
        run_score(&c)
    };

    let adult = score_model("adult", 0.0, false)?;
    let child = score_model("child", 0.0, false)?;
    let transfer = score_model("transfer", 0.0, false)?;
    let full = score_model("transfer_full", 0.0, false)?;
    let beta = if cfg.decode.lm_weight > 0.0 {
        cfg.decode.lm_weight
    } else {
        0.3
    };
    let fused = score_model("transfer_full", beta, false)?;
    let rescored = score_model("transfer_full", beta, true)?;

    let pct = |r: &ScoreReport| 100.0 * r.overall.cer();
    let mut out = String::new();
    let _ = writeln!(out, "Desk-scale synthetic reproduction (seed {})", cfg.seed);
    let _ = writeln!(
        out,
        "NOTE: the corpus is synthetic and the models are intentionally small."
    );
    let _ = writeln!(
        out,
        "Absolute error rates are NOT comparable to any published system;"
    );
    let _ = writeln!(out, "only the relative ordering of rows is meaningful.\n");

    let _ = writeln!(out, "Training strategy (child test CER):");
    let _ = writeln!(out, "  Adult only         {:6.2}%", pct(&adult));
    let _ = writeln!(out, "  Child only         {:6.2}%", pct(&child));
    let _ = writeln!(out, "  Transfer learning  {:6.2}%", pct(&transfer));

    let _ = writeln!(out, "\nPer-speaker breakdown, transfer model (child test):");
    for (spk, c) in &transfer.per_speaker {
        let _ = writeln!(
            out,
            "  {}  {:6.2}%  (S={} I={} D={} / N={})",
            spk,
            100.0 * c.cer(),
            c.sub,
            c.ins,
            c.del,
            c.ref_len
        );
    }
    let _ = writeln!(
        out,
        "  per-speaker std {:.2}%",
        100.0 * transfer.speaker_std
    );

    let _ = writeln!(out, "\nAugmentation and LM ablation (child test CER):");
    let _ = writeln!(out, "  transfer, speed perturbation only       {:6.2}%", pct(&transfer));
    let _ = writeln!(out, "  + volume + reverberation + SpecAugment  {:6.2}%", pct(&full));
    let _ = writeln!(out, "  + n-gram shallow fusion                 {:6.2}%", pct(&fused));
    let _ = writeln!(out, "  + LSTM rescoring                        {:6.2}%", pct(&rescored));

    std::fs::write(lay.results_path(), out)?;
    log_stage(cfg, "reproduce", &[lay.results_path()])
}

/// Runs `f` on a rayon pool with the requested thread count (0 keeps the
/// default pool).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool")
            .install(f)
    }
}
