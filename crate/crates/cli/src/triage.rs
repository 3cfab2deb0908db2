use crate::config::{set, set_opt};
use crate::inputs::{load_predictions, load_references, pair};
use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use lyralign::cascade::SongAlignment;
use lyralign::metrics::{lowest_confidence, tabulate, Confusion, WordTiming};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TriageUnit {
    /// One decision per song, from its song confidence.
    Song,
    /// One decision per word, from the word's own confidence.
    Word,
}

#[derive(Debug, Args)]
pub struct TriageArgs {
    /// Alignment JSON file or directory of them.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Reference labels; enables the confusion matrix and MAE comparison.
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// Accept units whose confidence is at least this value.
    #[arg(long, conflicts_with = "reject_fraction")]
    pub threshold: Option<f64>,
    /// Reject this fraction of units, lowest confidence first.
    #[arg(long)]
    pub reject_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub unit: Option<TriageUnit>,
    #[arg(long)]
    pub true_bound: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriageConfig {
    pub predictions: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub reject_fraction: Option<f64>,
    pub unit: TriageUnit,
    pub true_bound: f64,
    pub out: Option<PathBuf>,
}

impl Default for TriageConfig {
    fn default() -> Self {
        Self {
            predictions: None,
            references: None,
            threshold: None,
            reject_fraction: None,
            unit: TriageUnit::Word,
            true_bound: 0.2,
            out: None,
        }
    }
}

impl TriageArgs {
    pub fn resolve(&self, file: Option<TriageConfig>) -> anyhow::Result<TriageConfig> {
        let mut c = file.unwrap_or_default();
        set_opt(&mut c.predictions, self.predictions.clone());
        set_opt(&mut c.references, self.references.clone());
        // A rule given on the command line replaces whichever rule the file set.
        if self.threshold.is_some() || self.reject_fraction.is_some() {
            c.threshold = self.threshold;
            c.reject_fraction = self.reject_fraction;
        }
        set(&mut c.unit, self.unit);
        set(&mut c.true_bound, self.true_bound);
        set_opt(&mut c.out, self.out.clone());
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Threshold(f64),
    RejectFraction(f64),
}

/// A unit's id and confidence. Word ids are `{song_id}/{index:06}` so that
/// byte order matches song-then-position order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub confidence: f64,
}

pub fn word_id(song_id: &str, index: usize) -> String {
    format!("{song_id}/{index:06}")
}

pub fn items(predictions: &[SongAlignment], unit: TriageUnit) -> Vec<Item> {
    match unit {
        TriageUnit::Song => predictions
            .iter()
            .map(|p| Item {
                id: p.song_id.clone(),
                confidence: p.song_confidence,
            })
            .collect(),
        TriageUnit::Word => predictions
            .iter()
            .flat_map(|p| {
                p.words.iter().enumerate().map(|(i, w)| Item {
                    id: word_id(&p.song_id, i),
                    confidence: w.confidence,
                })
            })
            .collect(),
    }
}

/// Indices of rejected items under `rule`, ascending.
pub fn rejected(items: &[Item], rule: Rule) -> Vec<usize> {
    match rule {
        Rule::Threshold(h) => (0..items.len()).filter(|&i| items[i].confidence < h).collect(),
        Rule::RejectFraction(p) => {
            let pairs: Vec<(&str, f64)> = items.iter().map(|it| (it.id.as_str(), it.confidence)).collect();
            lowest_confidence(&pairs, p)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageEvaluation {
    pub true_bound: f64,
    /// Word-level counts for the decision taken.
    pub counts: Confusion,
    pub rates: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Mean absolute deviation over all words.
    pub full_mae: f64,
    /// Mean absolute deviation over accepted words.
    pub accepted_mae: Option<f64>,
    /// `accepted_mae - full_mae`.
    pub mae_delta: Option<f64>,
    /// `1 - accepted_mae / full_mae`.
    pub mae_reduction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriageReport {
    pub unit: TriageUnit,
    pub rule: Rule,
    pub accepted: Vec<String>,
    pub rejected: Vec<String>,
    pub evaluation: Option<TriageEvaluation>,
}

impl TriageReport {
    pub fn line(&self) -> String {
        let mut s = format!("accepted {} rejected {}", self.accepted.len(), self.rejected.len());
        if let Some(e) = &self.evaluation {
            s += &format!(", full MAE {:.4}", e.full_mae);
            if let Some(a) = e.accepted_mae {
                s += &format!(", accepted MAE {a:.4}");
            }
            if let Some(f) = e.f1 {
                s += &format!(", F1 {f:.4}");
            }
        }
        s
    }
}

fn evaluation(
    predictions: &[SongAlignment],
    references: &std::path::Path,
    unit: TriageUnit,
    rejected_ids: &BTreeSet<&str>,
    true_bound: f64,
) -> anyhow::Result<TriageEvaluation> {
    let refs = load_references(references)?;
    let (songs, skipped) = pair(predictions, &refs)?;
    if !skipped.is_empty() {
        tracing::warn!(n = skipped.len(), "predictions without references left out of the evaluation");
    }
    let mut words: Vec<WordTiming> = Vec::new();
    let mut accepted: Vec<bool> = Vec::new();
    for s in &songs {
        for w in &s.words {
            let id = match unit {
                TriageUnit::Song => s.song_id.clone(),
                TriageUnit::Word => word_id(&s.song_id, w.word_index),
            };
            accepted.push(!rejected_ids.contains(id.as_str()));
            words.push(*w);
        }
    }
    let counts = tabulate(&words, &accepted, true_bound);
    let abs = |w: &WordTiming| w.deviation().abs();
    let full_mae = words.iter().map(abs).sum::<f64>() / words.len() as f64;
    let kept: Vec<f64> = words.iter().zip(&accepted).filter(|(_, &a)| a).map(|(w, _)| abs(w)).collect();
    let accepted_mae = (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64);
    Ok(TriageEvaluation {
        true_bound,
        counts,
        rates: counts.rates(),
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        full_mae,
        accepted_mae,
        mae_delta: accepted_mae.map(|a| a - full_mae),
        mae_reduction: accepted_mae.filter(|_| full_mae > 0.0).map(|a| 1.0 - a / full_mae),
    })
}

pub fn cmd_triage(cfg: &TriageConfig) -> anyhow::Result<TriageReport> {
    let Some(pred) = &cfg.predictions else {
        bail!("missing --predictions");
    };
    let rule = match (cfg.threshold, cfg.reject_fraction) {
        (Some(h), None) => Rule::Threshold(h),
        (None, Some(p)) => {
            if !(0.0..=1.0).contains(&p) {
                bail!("--reject-fraction must be in [0, 1], got {p}");
            }
            Rule::RejectFraction(p)
        }
        (None, None) => bail!("pass --threshold or --reject-fraction"),
        (Some(_), Some(_)) => bail!("--threshold and --reject-fraction are mutually exclusive"),
    };
    let predictions = load_predictions(pred)?;
    let items = items(&predictions, cfg.unit);
    let rej: BTreeSet<usize> = rejected(&items, rule).into_iter().collect();
    let mut report = TriageReport {
        unit: cfg.unit,
        rule,
        accepted: Vec::new(),
        rejected: Vec::new(),
        evaluation: None,
    };
    for (i, it) in items.iter().enumerate() {
        if rej.contains(&i) {
            report.rejected.push(it.id.clone());
        } else {
            report.accepted.push(it.id.clone());
        }
    }
    if let Some(refs) = &cfg.references {
        let ids: BTreeSet<&str> = report.rejected.iter().map(String::as_str).collect();
        report.evaluation = Some(evaluation(&predictions, refs, cfg.unit, &ids, cfg.true_bound)?);
    }
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &cfg.out {
        Some(path) => std::fs::write(path, json).with_context(|| format!("write {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(report)
}
