//! Transcript normalization, character vocabulary, pinyin lexicon and
//! speaker-level corpus partitioning.

mod lexicon;
mod manifest;
mod normalize;
mod partition;
mod vocab;

pub use lexicon::{parse_pinyin, LexiconEntry, INITIALS, FINALS};
pub use manifest::{Manifest, ManifestRecord, Subset};
pub use normalize::normalize_transcript;
pub use partition::partition;
pub use vocab::{build_vocab, tokenize_chars, Vocabulary, BLANK_ID, SOS_EOS_ID, UNK_ID};

/// Sequence of vocabulary token ids.
pub type TokenSequence = Vec<usize>;
