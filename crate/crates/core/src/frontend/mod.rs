//! Synthetic corpus generation and acoustic feature extraction
//! (80-dim log-mel filterbank + 3-dim pitch).

mod corpus;
mod features;
mod synth;
mod waveform;

pub use corpus::{generate_corpus, CorpusConfig, SetConfig};
pub use features::{
    estimate_f0_contour, extract_features, logmel_fbank, mel_center_frequencies, mel_filterbank,
    pitch_features, FeatureSequence, DEFAULT_HOP_S, DEFAULT_N_MELS, DEFAULT_WIN_S,
};
pub use synth::{
    adult_profile, child_profile, default_recipes, synthesize_utterance, AgeGroup,
    SpeakerProfile, SynthesisSpec, TokenRecipe,
};
pub use waveform::Waveform;
