use super::labels::write_atomic;
use crate::error::{Error, IoContext, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

/// Review state of a song.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SongStatus {
    #[default]
    Unlabeled,
    MachineLabeled,
    Verified,
    Rejected,
}

impl SongStatus {
    /// Legal moves: unlabeled → machine_labeled → {verified, rejected}, and
    /// rejected → machine_labeled after re-alignment.
    pub fn can_become(self, to: SongStatus) -> bool {
        use SongStatus::*;
        matches!(
            (self, to),
            (Unlabeled, MachineLabeled)
                | (MachineLabeled, Verified)
                | (MachineLabeled, Rejected)
                | (Rejected, MachineLabeled)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SongStatus::Unlabeled => "unlabeled",
            SongStatus::MachineLabeled => "machine_labeled",
            SongStatus::Verified => "verified",
            SongStatus::Rejected => "rejected",
        }
    }
}

impl fmt::Display for SongStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SongStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidConfig(format!("unknown status `{s}`")))
    }
}

/// One manifest line. Paths are held resolved against the manifest directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SongRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_cache_path: Option<PathBuf>,
    pub lyrics_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_path: Option<PathBuf>,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_sec: Option<f64>,
    #[serde(default)]
    pub status: SongStatus,
}

impl SongRecord {
    /// The audio source: a feature cache if present, else the audio file.
    pub fn audio_ref(&self) -> &Path {
        self.feature_cache_path
            .as_deref()
            .or(self.audio_path.as_deref())
            .expect("validated record has an audio reference")
    }

    fn map_paths(&mut self, f: impl Fn(&Path) -> PathBuf) {
        for p in [
            &mut self.audio_path,
            &mut self.feature_cache_path,
            &mut self.labels_path,
            &mut self.alignment_path,
        ]
        .into_iter()
        .flatten()
        {
            *p = f(p);
        }
        self.lyrics_path = f(&self.lyrics_path);
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads a JSON-lines manifest. Blank lines are skipped; ids must be unique.
pub fn load_manifest(path: &Path) -> Result<Vec<SongRecord>> {
    let text = std::fs::read_to_string(path).io_context(|| format!("read {}", path.display()))?;
    let base = base_dir(path);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut rec: SongRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if rec.audio_path.is_none() && rec.feature_cache_path.is_none() {
            return Err(parse_err("missing field `audio_path` (or `feature_cache_path`)".into()));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        rec.map_paths(|p| base.join(p));
        out.push(rec);
    }
    Ok(out)
}

/// Writes records as JSON lines, storing paths relative to the manifest
/// directory where possible.
pub fn save_manifest(path: &Path, records: &[SongRecord]) -> Result<()> {
    let base = base_dir(path);
    let mut out = String::new();
    for rec in records {
        let mut rec = rec.clone();
        rec.map_paths(|p| p.strip_prefix(&base).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf()));
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_machine() {
        use SongStatus::*;
        assert!(Unlabeled.can_become(MachineLabeled));
        assert!(MachineLabeled.can_become(Verified));
        assert!(Rejected.can_become(MachineLabeled));
        assert!(!Unlabeled.can_become(Verified));
        assert!(!Verified.can_become(Rejected));
        assert_eq!("machine_labeled".parse::<SongStatus>().unwrap(), MachineLabeled);
    }
}
