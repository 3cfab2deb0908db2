use super::labels::{Labels, UnitRef};
use super::manifest::{load_manifest, save_manifest, SongRecord, SongStatus};
use crate::cascade::SongAlignment;
use crate::error::{Error, IoContext, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

/// Audit log file name, stored next to the manifest.
pub const AUDIT_FILE: &str = "corrections.jsonl";

/// How many recent request ids are remembered for de-duplication.
const DEDUPE_WINDOW: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditEvent {
    Correction { unit: UnitRef, old: f64, new: f64 },
    Status { from: SongStatus, to: SongStatus },
}

/// One line of the append-only audit log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp: String,
    pub song_id: String,
    pub reviewer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    #[serde(flatten)]
    pub event: AuditEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectionOutcome {
    pub song_id: String,
    pub unit: UnitRef,
    pub old: f64,
    pub new: f64,
    pub text: String,
    /// True when the request id had already been applied.
    pub duplicate: bool,
}

/// Manifest-backed song store with per-song write serialisation.
pub struct Store {
    manifest_path: PathBuf,
    audit_path: PathBuf,
    records: RwLock<Vec<SongRecord>>,
    song_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    audit_lock: Mutex<VecDeque<(String, CorrectionOutcome)>>,
}

impl Store {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let records = load_manifest(manifest_path)?;
        let audit_path = manifest_path
            .parent()
            .map(|d| d.join(AUDIT_FILE))
            .unwrap_or_else(|| PathBuf::from(AUDIT_FILE));
        let mut recent = VecDeque::new();
        if audit_path.exists() {
            for entry in read_audit(&audit_path)? {
                if let (Some(id), AuditEvent::Correction { unit, old, new }) = (entry.request_id, entry.event) {
                    recent.push_back((
                        id,
                        CorrectionOutcome {
                            song_id: entry.song_id,
                            unit,
                            old,
                            new,
                            text: String::new(),
                            duplicate: true,
                        },
                    ));
                    if recent.len() > DEDUPE_WINDOW {
                        recent.pop_front();
                    }
                }
            }
        }
        Ok(Self {
            manifest_path: manifest_path.to_path_buf(),
            audit_path,
            records: RwLock::new(records),
            song_locks: Mutex::new(HashMap::new()),
            audit_lock: Mutex::new(recent),
        })
    }

    pub fn manifest_path(&self) -> &Path {
        &self.manifest_path
    }

    pub fn audit_path(&self) -> &Path {
        &self.audit_path
    }

    pub fn records(&self) -> Vec<SongRecord> {
        self.records.read().unwrap().clone()
    }

    pub fn record(&self, song_id: &str) -> Result<SongRecord> {
        self.records
            .read()
            .unwrap()
            .iter()
            .find(|r| r.id == song_id)
            .cloned()
            .ok_or_else(|| Error::UnknownSong(song_id.to_string()))
    }

    fn lock_song(&self, song_id: &str) -> Arc<Mutex<()>> {
        self.song_locks
            .lock()
            .unwrap()
            .entry(song_id.to_string())
            .or_default()
            .clone()
    }

    fn update_record(&self, song_id: &str, f: impl FnOnce(&mut SongRecord)) -> Result<SongRecord> {
        let mut recs = self.records.write().unwrap();
        let rec = recs
            .iter_mut()
            .find(|r| r.id == song_id)
            .ok_or_else(|| Error::UnknownSong(song_id.to_string()))?;
        f(rec);
        let out = rec.clone();
        save_manifest(&self.manifest_path, &recs)?;
        Ok(out)
    }

    pub fn alignment(&self, song_id: &str) -> Result<Option<SongAlignment>> {
        match self.record(song_id)?.alignment_path {
            Some(p) if p.exists() => SongAlignment::load(&p).map(Some),
            _ => Ok(None),
        }
    }

    /// Current labels: the labels file if present, else the machine labels.
    pub fn labels(&self, song_id: &str) -> Result<Option<Labels>> {
        let rec = self.record(song_id)?;
        if let Some(p) = rec.labels_path.as_ref().filter(|p| p.exists()) {
            return Labels::load(p).map(Some);
        }
        Ok(self.alignment(song_id)?.map(|a| a.to_labels()))
    }

    fn duration(&self, rec: &SongRecord) -> Result<Option<f64>> {
        if let Some(d) = rec.duration_sec {
            return Ok(Some(d));
        }
        Ok(self.alignment(&rec.id)?.map(|a| a.duration_sec))
    }

    /// Attaches a fresh machine alignment and moves the song to `machine_labeled`
    /// when that is a legal transition.
    pub fn attach_alignment(&self, song_id: &str, alignment_path: &Path, duration_sec: f64) -> Result<SongRecord> {
        let lock = self.lock_song(song_id);
        let _guard = lock.lock().unwrap();
        let before = self.record(song_id)?;
        let to = SongStatus::MachineLabeled;
        let moves = before.status.can_become(to);
        let rec = self.update_record(song_id, |r| {
            r.alignment_path = Some(alignment_path.to_path_buf());
            r.duration_sec = Some(duration_sec);
            if moves {
                r.status = to;
            }
        })?;
        if moves {
            self.append(&AuditEntry {
                timestamp: now(),
                song_id: song_id.to_string(),
                reviewer: "aligner".into(),
                request_id: None,
                event: AuditEvent::Status {
                    from: before.status,
                    to,
                },
            })?;
        }
        Ok(rec)
    }

    /// Moves a song along the status machine. Setting the current status again
    /// is a no-op.
    pub fn set_status(&self, song_id: &str, to: SongStatus, reviewer: &str) -> Result<SongRecord> {
        let lock = self.lock_song(song_id);
        let _guard = lock.lock().unwrap();
        let rec = self.record(song_id)?;
        if rec.status == to {
            return Ok(rec);
        }
        if !rec.status.can_become(to) {
            return Err(Error::IllegalTransition {
                from: rec.status.to_string(),
                to: to.to_string(),
            });
        }
        let out = self.update_record(song_id, |r| r.status = to)?;
        self.append(&AuditEntry {
            timestamp: now(),
            song_id: song_id.to_string(),
            reviewer: reviewer.to_string(),
            request_id: None,
            event: AuditEvent::Status { from: rec.status, to },
        })?;
        Ok(out)
    }

    /// Sets a unit's onset, writing the labels file and appending to the audit
    /// log. A repeated `request_id` returns the earlier outcome without writing.
    pub fn record_correction(
        &self,
        song_id: &str,
        unit: UnitRef,
        onset_sec: f64,
        reviewer: &str,
        request_id: Option<&str>,
    ) -> Result<CorrectionOutcome> {
        let lock = self.lock_song(song_id);
        let _guard = lock.lock().unwrap();
        let rec = self.record(song_id)?;
        if let Some(id) = request_id {
            let recent = self.audit_lock.lock().unwrap();
            if let Some((_, o)) = recent.iter().find(|(r, o)| r == id && o.song_id == song_id) {
                return Ok(CorrectionOutcome {
                    duplicate: true,
                    ..o.clone()
                });
            }
        }
        let mut labels = self.labels(song_id)?.ok_or_else(|| Error::UnknownUnit(unit.to_string()))?;
        let target = labels
            .unit_mut(unit)
            .ok_or_else(|| Error::UnknownUnit(unit.to_string()))?;
        let duration = self.duration(&rec)?.unwrap_or(f64::INFINITY);
        if !onset_sec.is_finite() || onset_sec < 0.0 || onset_sec > duration {
            return Err(Error::InvalidOnset {
                onset: onset_sec,
                duration,
            });
        }
        let old = target.start_sec;
        target.start_sec = onset_sec;
        let text = target.text.clone();

        let labels_path = match &rec.labels_path {
            Some(p) => p.clone(),
            None => {
                let dir = rec
                    .alignment_path
                    .as_deref()
                    .and_then(Path::parent)
                    .or_else(|| self.manifest_path.parent())
                    .unwrap_or(Path::new("."));
                let p = dir.join(format!("{song_id}.labels.json"));
                self.update_record(song_id, |r| r.labels_path = Some(p.clone()))?;
                p
            }
        };
        labels.save(&labels_path)?;
        let outcome = CorrectionOutcome {
            song_id: song_id.to_string(),
            unit,
            old,
            new: onset_sec,
            text,
            duplicate: false,
        };
        self.append(&AuditEntry {
            timestamp: now(),
            song_id: song_id.to_string(),
            reviewer: reviewer.to_string(),
            request_id: request_id.map(str::to_string),
            event: AuditEvent::Correction {
                unit,
                old,
                new: onset_sec,
            },
        })?;
        if let Some(id) = request_id {
            let mut recent = self.audit_lock.lock().unwrap();
            recent.push_back((id.to_string(), outcome.clone()));
            if recent.len() > DEDUPE_WINDOW {
                recent.pop_front();
            }
        }
        Ok(outcome)
    }

    fn append(&self, entry: &AuditEntry) -> Result<()> {
        let _guard = self.audit_lock.lock().unwrap();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.audit_path)
            .io_context(|| format!("open {}", self.audit_path.display()))?;
        let mut line = serde_json::to_string(entry)?;
        line.push('\n');
        f.write_all(line.as_bytes())
            .io_context(|| format!("append {}", self.audit_path.display()))
    }

    pub fn audit_entries(&self) -> Result<Vec<AuditEntry>> {
        if !self.audit_path.exists() {
            return Ok(Vec::new());
        }
        read_audit(&self.audit_path)
    }

    /// Timestamp of the latest human action on a song.
    pub fn last_reviewed(&self, song_id: &str) -> Result<Option<String>> {
        Ok(self
            .audit_entries()?
            .into_iter()
            .filter(|e| e.song_id == song_id && e.reviewer != "aligner")
            .map(|e| e.timestamp)
            .last())
    }
}

/// Applies a song's correction entries, in order, to its machine labels.
pub fn replay(machine: &Labels, song_id: &str, entries: &[AuditEntry]) -> Labels {
    let mut labels = machine.clone();
    for e in entries.iter().filter(|e| e.song_id == song_id) {
        if let AuditEvent::Correction { unit, new, .. } = e.event {
            if let Some(u) = labels.unit_mut(unit) {
                u.start_sec = new;
            }
        }
    }
    labels
}

fn read_audit(path: &Path) -> Result<Vec<AuditEntry>> {
    let text = std::fs::read_to_string(path).io_context(|| format!("read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
