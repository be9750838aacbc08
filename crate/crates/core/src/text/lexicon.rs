use crate::error::{Error, Result};

/// The 21 Mandarin syllable onsets, ordered longest-first so that a
/// greedy prefix match picks `zh` over `z`.
pub const INITIALS: [&str; 21] = [
    "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "r",
    "z", "c", "s",
];

/// Mandarin rimes, with `v` standing in for the umlauted u.
pub const FINALS: [&str; 38] = [
    "a", "o", "e", "i", "u", "v", "ai", "ei", "ao", "ou", "an", "en", "ang", "eng", "ong", "er",
    "ia", "ie", "iao", "iu", "ian", "in", "iang", "ing", "iong", "ua", "uo", "uai", "ui", "uan",
    "un", "uang", "ueng", "ve", "van", "vn", "uen", "io",
];

/// A syllable split into onset, rime and tone. Tone 5 is the neutral tone;
/// syllables written without a digit normalize to tone 5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    /// Normalized syllable text, always carrying an explicit tone digit.
    pub syllable: String,
    /// Onset token; empty for zero-onset syllables.
    pub initial: String,
    /// Rime token.
    pub final_: String,
    /// 1-4 lexical tones, 5 = neutral.
    pub tone: u8,
}

impl LexiconEntry {
    /// Re-concatenation of the parts; equals `syllable` by construction.
    pub fn reassemble(&self) -> String {
        format!("{}{}{}", self.initial, self.final_, self.tone)
    }
}

/// Splits a lowercase pinyin syllable (optional trailing tone digit) into
/// Initial + Final + tone by longest match against the onset table.
pub fn parse_pinyin(syllable: &str) -> Result<LexiconEntry> {
    let s = syllable.trim();
    if s.is_empty() {
        return Err(Error::Lexicon("empty syllable".into()));
    }
    let (body, tone) = match s.chars().last().unwrap() {
        d @ '1'..='5' => (&s[..s.len() - 1], d as u8 - b'0'),
        '0' | '6'..='9' => {
            return Err(Error::Lexicon(format!("invalid tone in `{}`", syllable)))
        }
        _ => (s, 5u8),
    };
    if body.is_empty() {
        return Err(Error::Lexicon(format!("no syllable body in `{}`", syllable)));
    }
    let initial = INITIALS
        .iter()
        .find(|i| body.starts_with(**i))
        .copied()
        .unwrap_or("");
    let final_ = &body[initial.len()..];
    if !FINALS.contains(&final_) {
        return Err(Error::Lexicon(format!(
            "`{}`: remainder `{}` is not a known final",
            syllable, final_
        )));
    }
    Ok(LexiconEntry {
        syllable: format!("{}{}", body, tone),
        initial: initial.to_string(),
        final_: final_.to_string(),
        tone,
    })
}
