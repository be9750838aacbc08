use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Corpus subset tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subset {
    /// Adult read speech.
    A,
    /// Child read speech.
    C1,
    /// Child conversational speech.
    C2,
}

impl Subset {
    pub fn all() -> [Subset; 3] {
        [Subset::A, Subset::C1, Subset::C2]
    }

    pub fn parse(s: &str) -> Result<Subset> {
        match s {
            "A" => Ok(Subset::A),
            "C1" => Ok(Subset::C1),
            "C2" => Ok(Subset::C2),
            other => Err(Error::Corpus(format!("invalid subset tag `{}`", other))),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subset::A => write!(f, "A"),
            Subset::C1 => write!(f, "C1"),
            Subset::C2 => write!(f, "C2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub utt_id: String,
    pub audio_path: String,
    pub speaker_id: String,
    pub subset: Subset,
    pub transcript: String,
}

/// Utterance listing with unique ids, stored as one tab-separated record
/// per line: utt_id, audio_path, speaker_id, subset, transcript.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    records: Vec<ManifestRecord>,
    ids: HashSet<String>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    pub fn push(&mut self, rec: ManifestRecord) -> Result<()> {
        if !self.ids.insert(rec.utt_id.clone()) {
            return Err(Error::Corpus(format!(
                "duplicate utterance id `{}`",
                rec.utt_id
            )));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, utt_id: &str) -> bool {
        self.ids.contains(utt_id)
    }

    pub fn get(&self, utt_id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.utt_id == utt_id)
    }

    pub fn filter(&self, pred: impl Fn(&ManifestRecord) -> bool) -> Manifest {
        let mut out = Manifest::new();
        for r in &self.records {
            if pred(r) {
                out.push(r.clone()).expect("ids unique in source");
            }
        }
        out
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.speaker_id.clone()) {
                out.push(r.speaker_id.clone());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = String::new();
        for r in &self.records {
            if r.transcript.contains('\t') || r.transcript.contains('\n') {
                return Err(Error::Corpus(format!(
                    "transcript of `{}` contains a tab or newline",
                    r.utt_id
                )));
            }
            body.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.utt_id, r.audio_path, r.speaker_id, r.subset, r.transcript
            ));
        }
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let body = std::fs::read_to_string(path)?;
        let mut m = Manifest::new();
        for (i, line) in body.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.splitn(5, '\t').collect();
            if parts.len() != 5 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 5 tab-separated fields, got {}", parts.len()),
                });
            }
            m.push(ManifestRecord {
                utt_id: parts[0].to_string(),
                audio_path: parts[1].to_string(),
                speaker_id: parts[2].to_string(),
                subset: Subset::parse(parts[3]).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?,
                transcript: parts[4].to_string(),
            })?;
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, spk: &str, subset: Subset) -> ManifestRecord {
        ManifestRecord {
            utt_id: id.into(),
            audio_path: format!("{}.f64", id),
            speaker_id: spk.into(),
            subset,
            transcript: "你好".into(),
        }
    }

    #[test]
    fn rejects_duplicate_ids() {
        let mut m = Manifest::new();
        m.push(rec("u1", "s1", Subset::A)).unwrap();
        assert!(m.push(rec("u1", "s2", Subset::C1)).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let mut m = Manifest::new();
        m.push(rec("u1", "s1", Subset::A)).unwrap();
        m.push(rec("u2", "s2", Subset::C2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.tsv");
        m.save(&p).unwrap();
        let l = Manifest::load(&p).unwrap();
        assert_eq!(l.records(), m.records());
    }

    #[test]
    fn load_rejects_malformed_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        std::fs::write(&p, "u1\tonly_two_fields\n").unwrap();
        assert!(matches!(Manifest::load(&p), Err(Error::Parse { line: 1, .. })));
    }
}
