use anyhow::{bail, Context};
use lyralign::cascade::SongAlignment;
use lyralign::datasets::{load_manifest, Labels};
use lyralign::metrics::{word_timings, SongEval};
use std::collections::BTreeMap;
use std::path::Path;

/// Name of the per-batch failure report written next to alignments.
pub const FAILURES_FILE: &str = "failures.json";

/// Alignment JSON files: a single file, or every `*.json` in a directory
/// except the failure report. Sorted by song id.
pub fn load_predictions(path: &Path) -> anyhow::Result<Vec<SongAlignment>> {
    let mut out = Vec::new();
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .with_context(|| format!("list {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .filter(|p| p.file_name().is_some_and(|n| n != FAILURES_FILE))
            .collect();
        files.sort();
        for f in files {
            out.push(SongAlignment::load(&f)?);
        }
    } else {
        out.push(SongAlignment::load(path)?);
    }
    if out.is_empty() {
        bail!("no alignment files found in {}", path.display());
    }
    out.sort_by(|a, b| a.song_id.cmp(&b.song_id));
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Reference {
    pub labels: Labels,
    pub duration_sec: Option<f64>,
}

/// Reference labels keyed by song id, from a manifest (`.jsonl`) or a
/// directory of `{song_id}.json` label files.
pub fn load_references(path: &Path) -> anyhow::Result<BTreeMap<String, Reference>> {
    let mut out = BTreeMap::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path).with_context(|| format!("list {}", path.display()))? {
            let p = entry?.path();
            if p.extension().is_some_and(|x| x == "json") {
                let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                out.insert(
                    id,
                    Reference {
                        labels: Labels::load(&p)?,
                        duration_sec: None,
                    },
                );
            }
        }
    } else {
        for rec in load_manifest(path)? {
            if let Some(lp) = &rec.labels_path {
                out.insert(
                    rec.id.clone(),
                    Reference {
                        labels: Labels::load(lp)?,
                        duration_sec: rec.duration_sec,
                    },
                );
            }
        }
    }
    if out.is_empty() {
        bail!("no reference labels found in {}", path.display());
    }
    Ok(out)
}

/// Pairs predictions with references. Predictions without a reference are
/// skipped with a warning and their ids returned second.
pub(crate) fn pair(
    predictions: &[SongAlignment],
    references: &BTreeMap<String, Reference>,
) -> anyhow::Result<(Vec<SongEval>, Vec<String>)> {
    let mut songs = Vec::new();
    let mut skipped = Vec::new();
    for p in predictions {
        let Some(r) = references.get(&p.song_id) else {
            tracing::warn!(song_id = %p.song_id, "no reference labels; skipped");
            skipped.push(p.song_id.clone());
            continue;
        };
        songs.push(SongEval {
            song_id: p.song_id.clone(),
            words: word_timings(p, &r.labels)?,
            duration_sec: r.duration_sec.unwrap_or(p.duration_sec),
        });
    }
    if songs.is_empty() {
        bail!("no prediction has a matching reference");
    }
    Ok((songs, skipped))
}
