//! Command-level orchestration: one function per pipeline stage, all
//! driven by a plain key-value configuration file and a single master
//! seed from which every stage derives its own stream.

mod config;
mod stages;

pub use config::{
    AugmentSettings, AugmentedSet, CorpusSizes, DecodeSettings, LmSettings, PipelineConfig,
    Preset, TrainSet, TrainSettings,
};
pub use stages::{
    run_decode, run_gen_corpus, run_prep, run_reproduce, run_rescore, run_score, run_train,
    run_train_lm, run_transfer, with_workers, Layout,
};
