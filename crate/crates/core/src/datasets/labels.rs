use crate::error::{Error, IoContext, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// One timed unit (a line or a word).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelUnit {
    pub start_sec: f64,
    pub text: String,
}

/// Onset labels for a song. Sentence onsets are always present; word onsets
/// are optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub sentences: Vec<LabelUnit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<LabelUnit>>,
}

impl Labels {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).io_context(|| format!("read {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        write_atomic(path, json.as_bytes())
    }

    pub fn unit(&self, r: UnitRef) -> Option<&LabelUnit> {
        match r.kind {
            UnitKind::Sentence => self.sentences.get(r.index),
            UnitKind::Word => self.words.as_ref()?.get(r.index),
        }
    }

    pub fn unit_mut(&mut self, r: UnitRef) -> Option<&mut LabelUnit> {
        match r.kind {
            UnitKind::Sentence => self.sentences.get_mut(r.index),
            UnitKind::Word => self.words.as_mut()?.get_mut(r.index),
        }
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).io_context(|| format!("write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).io_context(|| format!("rename to {}", path.display()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitKind {
    Sentence,
    Word,
}

/// Reference to a unit, written `sentence:3` or `word:12`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnitRef {
    pub kind: UnitKind,
    pub index: usize,
}

impl UnitRef {
    pub fn word(index: usize) -> Self {
        Self {
            kind: UnitKind::Word,
            index,
        }
    }

    pub fn sentence(index: usize) -> Self {
        Self {
            kind: UnitKind::Sentence,
            index,
        }
    }
}

impl fmt::Display for UnitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            UnitKind::Sentence => "sentence",
            UnitKind::Word => "word",
        };
        write!(f, "{kind}:{}", self.index)
    }
}

impl FromStr for UnitRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownUnit(s.to_string());
        let (kind, idx) = s.split_once(':').ok_or_else(bad)?;
        let kind = match kind {
            "sentence" => UnitKind::Sentence,
            "word" => UnitKind::Word,
            _ => return Err(bad()),
        };
        let index = idx.parse().map_err(|_| bad())?;
        Ok(Self { kind, index })
    }
}

impl Serialize for UnitRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnitRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_refs_round_trip() {
        for s in ["word:3", "sentence:0"] {
            assert_eq!(s.parse::<UnitRef>().unwrap().to_string(), s);
        }
        for s in ["word", "phrase:1", "word:-1", "word:x"] {
            assert!(s.parse::<UnitRef>().is_err());
        }
    }
}
