use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::text::{Manifest, TokenSequence};

pub const BLANK_ID: usize = 0;
pub const UNK_ID: usize = 1;
/// sos and eos share one id.
pub const SOS_EOS_ID: usize = 2;

pub const BLANK_TOKEN: &str = "<blank>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SOS_EOS_TOKEN: &str = "<sos/eos>";

/// Character vocabulary with fixed special ids 0..=2.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(regular: impl IntoIterator<Item = String>) -> Self {
        let mut tokens = vec![
            BLANK_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
            SOS_EOS_TOKEN.to_string(),
        ];
        tokens.extend(regular);
        let lookup = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, lookup }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Count of non-blank tokens (the CTC K).
    pub fn num_labels(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.tokens.join("\n") + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        let lines: Vec<&str> = body.lines().collect();
        if lines.len() < 3
            || lines[0] != BLANK_TOKEN
            || lines[1] != UNK_TOKEN
            || lines[2] != SOS_EOS_TOKEN
        {
            return Err(Error::Parse {
                line: 1,
                message: "vocabulary file must start with the three specials".into(),
            });
        }
        Ok(Self::from_tokens(lines[3..].iter().map(|s| s.to_string())))
    }

    /// Renders token ids as text, skipping specials.
    pub fn detokenize(&self, seq: &[usize]) -> String {
        seq.iter()
            .filter(|&&id| id != BLANK_ID && id != SOS_EOS_ID)
            .map(|&id| self.token(id))
            .collect()
    }
}

/// One token per non-whitespace character; unknown characters map to unk.
pub fn tokenize_chars(transcript: &str, vocab: &Vocabulary) -> TokenSequence {
    transcript
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| vocab.id(&c.to_string()).unwrap_or(UNK_ID))
        .collect()
}

/// Builds the character vocabulary from training transcripts: the three
/// specials plus every character seen, in codepoint order.
pub fn build_vocab(manifests: &[&Manifest]) -> Result<Vocabulary> {
    let mut chars: BTreeSet<char> = BTreeSet::new();
    let mut any = false;
    for m in manifests {
        for rec in m.records() {
            any = true;
            for c in rec.transcript.chars() {
                if !c.is_whitespace() {
                    chars.insert(c);
                }
            }
        }
    }
    if !any {
        return Err(Error::Corpus("empty corpus for vocabulary".into()));
    }
    // the unk token appears literally in normalized transcripts; its
    // characters must not leak in as regular tokens
    for c in UNK_TOKEN.chars() {
        chars.remove(&c);
    }
    Ok(Vocabulary::from_tokens(
        chars.into_iter().map(|c| c.to_string()),
    ))
}
