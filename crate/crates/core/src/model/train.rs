use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::augment::{spec_augment, SpecAugmentConfig};
use crate::decode::greedy_ctc_decode;
use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::model::net::{
    eval_ctc_logits, eval_mtl_loss, loss_and_grads, ModelConfig, Session,
};
use crate::score::edit_distance;
use crate::tensor::rng::{derive_seed, rng_from_seed};
use crate::tensor::{save_params, AdamConfig, ParamStore};
use crate::text::TokenSequence;

/// One training/evaluation item: extracted features plus the token ids of
/// the reference transcript.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub feats: FeatureSequence,
    pub tokens: TokenSequence,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// CTC task weight in the joint objective.
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub label_smoothing: f64,
    pub specaug: SpecAugmentConfig,
    pub seed: u64,
    /// When set, parameters are checkpointed after every epoch.
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn quick(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            lambda: 0.3,
            epochs,
            batch_size: 8,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            label_smoothing: 0.0,
            specaug: SpecAugmentConfig::disabled(),
            seed,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_cer: f64,
}

/// Tab-separated per-epoch log: epoch, train_loss, valid_loss, valid CER.
pub fn write_epoch_log(stats: &[EpochStats], path: &Path) -> Result<()> {
    let mut out = String::from("epoch\ttrain_loss\tvalid_loss\tvalid_greedy_cer\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}",
            s.epoch, s.train_loss, s.valid_loss, s.valid_cer
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Mean evaluation-mode joint loss and pooled greedy CER over a set.
pub fn evaluate(
    params: &ParamStore,
    config: &ModelConfig,
    set: &[Utterance],
    lambda: f64,
) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss = 0.0;
    let mut errors = 0usize;
    let mut ref_len = 0usize;
    for utt in set {
        loss += eval_mtl_loss(params, config, &utt.feats.frames, &utt.tokens, lambda, 0.0)
            .map_err(|e| {
                Error::Training(format!("evaluating `{}`: {}", utt.feats.utt_id, e))
            })?
            .total;
        let logits = eval_ctc_logits(params, config, &utt.feats.frames)?;
        let grid = crate::ctc::PosteriorGrid::from_logits(&logits)?;
        let hyp = greedy_ctc_decode(&grid);
        let c = edit_distance(&utt.tokens, &hyp);
        errors += c.total();
        ref_len += c.ref_len;
    }
    let cer = if ref_len == 0 {
        0.0
    } else {
        errors as f64 / ref_len as f64
    };
    Ok((loss / set.len() as f64, cer))
}

/// Epoch loop with shuffled mini-batches, on-the-fly SpecAugment and Adam
/// updates. Gradients are averaged within each batch; per-epoch validation
/// loss and greedy CER are returned (and optionally checkpointed).
pub fn train(
    params: &mut ParamStore,
    config: &ModelConfig,
    tc: &TrainConfig,
    train_set: &[Utterance],
    valid_set: &[Utterance],
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    if train_set.is_empty() && tc.epochs > 0 {
        return Err(Error::Training("empty training set".into()));
    }
    let mut stats = Vec::with_capacity(tc.epochs);
    let specaug_on =
        tc.specaug.num_time_masks > 0 || tc.specaug.num_freq_masks > 0;
    for epoch in 1..=tc.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = rng_from_seed(derive_seed(tc.seed, &format!("epoch:{}", epoch)));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(tc.batch_size.max(1)) {
            let mut acc: HashMap<String, Vec<f64>> = HashMap::new();
            for &i in batch {
                let utt = &train_set[i];
                let frames = if specaug_on {
                    let seed =
                        derive_seed(tc.seed, &format!("specaug:{}:{}", epoch, utt.feats.utt_id));
                    spec_augment(&utt.feats, &tc.specaug, seed)?.frames
                } else {
                    utt.feats.frames.clone()
                };
                let mut sess = Session::train(derive_seed(
                    tc.seed,
                    &format!("dropout:{}:{}", epoch, utt.feats.utt_id),
                ));
                let (breakdown, grads) = loss_and_grads(
                    params,
                    config,
                    &frames,
                    &utt.tokens,
                    tc.lambda,
                    tc.label_smoothing,
                    &mut sess,
                )
                .map_err(|e| {
                    Error::Training(format!("utterance `{}`: {}", utt.feats.utt_id, e))
                })?;
                if !breakdown.total.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss on utterance `{}`",
                        utt.feats.utt_id
                    )));
                }
                epoch_loss += breakdown.total;
                for (name, g) in grads {
                    let slot = acc.entry(name).or_insert_with(|| vec![0.0; g.len()]);
                    for (d, s) in slot.iter_mut().zip(&g) {
                        *d += s;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in acc.values_mut() {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            params.adam_step(&acc, &tc.adam)?;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let (valid_loss, valid_cer) = evaluate(params, config, valid_set, tc.lambda)?;
        if let Some(dir) = &tc.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            save_params(params, &dir.join(format!("epoch{:03}.ckpt", epoch)))?;
        }
        stats.push(EpochStats {
            epoch,
            train_loss,
            valid_loss,
            valid_cer,
        });
    }
    Ok(stats)
}

/// Retraining from a pretrained parameter store: identical loop, all
/// tensors updated. Zero epochs leave the parameters untouched.
pub fn transfer_learn(
    params: &mut ParamStore,
    config: &ModelConfig,
    tc: &TrainConfig,
    child_train: &[Utterance],
    child_valid: &[Utterance],
) -> Result<Vec<EpochStats>> {
    crate::model::net::check_config(params, config)?;
    train(params, config, tc, child_train, child_valid)
}
