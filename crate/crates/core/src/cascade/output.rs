use crate::datasets::{LabelUnit, Labels};
use crate::error::{Error, IoContext, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceOnset {
    pub text: String,
    pub onset_sec: f64,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordOnset {
    pub text: String,
    pub onset_sec: f64,
    pub confidence: f64,
    pub segment_id: usize,
}

/// Fingerprints of the weights that produced an alignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVersions {
    pub sentence: String,
    pub word: String,
}

/// The canonical per-song alignment artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SongAlignment {
    pub song_id: String,
    pub duration_sec: f64,
    pub sentences: Vec<SentenceOnset>,
    pub words: Vec<WordOnset>,
    pub song_confidence: f64,
    pub model_versions: ModelVersions,
}

impl SongAlignment {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).io_context(|| format!("write {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).io_context(|| format!("read {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Machine labels in the labels-file format.
    pub fn to_labels(&self) -> Labels {
        Labels {
            sentences: self
                .sentences
                .iter()
                .map(|s| LabelUnit {
                    start_sec: s.onset_sec,
                    text: s.text.clone(),
                })
                .collect(),
            words: Some(
                self.words
                    .iter()
                    .map(|w| LabelUnit {
                        start_sec: w.onset_sec,
                        text: w.text.clone(),
                    })
                    .collect(),
            ),
        }
    }

    /// Enhanced LRC: one `[mm:ss.xx]` line per sentence with `<mm:ss.xx>` word stamps.
    pub fn to_lrc(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sentences.iter().enumerate() {
            out.push_str(&lrc_stamp('[', s.onset_sec, ']'));
            let words: Vec<&WordOnset> = self.words.iter().filter(|w| w.segment_id == i).collect();
            if words.is_empty() {
                out.push_str(&s.text);
            }
            for (j, w) in words.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(&lrc_stamp('<', w.onset_sec, '>'));
                out.push_str(&w.text);
            }
            out.push('\n');
        }
        out
    }
}

/// `mm:ss.xx` with centisecond rounding.
pub fn lrc_stamp(open: char, seconds: f64, close: char) -> String {
    let cs = (seconds.max(0.0) * 100.0).round() as u64;
    let mut s = String::new();
    let _ = write!(s, "{open}{:02}:{:02}.{:02}{close}", cs / 6000, (cs / 100) % 60, cs % 100);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamps_round_to_centiseconds() {
        assert_eq!(lrc_stamp('[', 0.0, ']'), "[00:00.00]");
        assert_eq!(lrc_stamp('<', 65.126, '>'), "<01:05.13>");
        assert_eq!(lrc_stamp('[', 59.999, ']'), "[01:00.00]");
    }
}
