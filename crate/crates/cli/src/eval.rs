use crate::config::{set, set_opt};
use crate::inputs::{load_predictions, load_references, pair};
use crate::{svg, Outcome};
use anyhow::{bail, Context};
use clap::Args;
use lyralign::metrics::{evaluate, MetricsReport};
use lyralign::par::Exec;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Thresholds swept for the triage table and curves: 0.00, 0.01, ..., 1.00.
pub fn sweep_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Alignment JSON file or directory of them.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Manifest with labels, or a directory of `{song_id}.json` label files.
    #[arg(long)]
    pub references: Option<PathBuf>,
    /// Mauch tolerances, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub taus: Vec<f64>,
    /// Deviation below which a word counts as correct in the triage table.
    #[arg(long)]
    pub true_bound: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Histogram half-width in seconds.
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub predictions: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub taus: Vec<f64>,
    pub true_bound: f64,
    pub bins: usize,
    pub range: f64,
    pub out: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            predictions: None,
            references: None,
            taus: vec![0.2, 0.3],
            true_bound: 0.2,
            bins: 80,
            range: 2.0,
            out: PathBuf::from("eval"),
        }
    }
}

impl EvalArgs {
    pub fn resolve(&self, file: Option<EvalConfig>) -> anyhow::Result<EvalConfig> {
        let mut c = file.unwrap_or_default();
        set_opt(&mut c.predictions, self.predictions.clone());
        set_opt(&mut c.references, self.references.clone());
        if !self.taus.is_empty() {
            c.taus = self.taus.clone();
        }
        set(&mut c.true_bound, self.true_bound);
        set(&mut c.bins, self.bins);
        set(&mut c.range, self.range);
        set(&mut c.out, self.out.clone());
        Ok(c)
    }
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    /// Predictions that had no reference.
    pub skipped: Vec<String>,
}

impl EvalReport {
    pub fn outcome(&self) -> Outcome {
        if self.skipped.is_empty() {
            Outcome::Success
        } else {
            Outcome::Partial
        }
    }
}

/// Writes `report.json`, `songs.csv`, `summary.csv`, `triage.csv`,
/// `histogram.csv`, `histogram.svg` and `triage.svg` into the output directory.
pub fn cmd_eval(cfg: &EvalConfig, exec: Exec) -> anyhow::Result<EvalReport> {
    let (Some(pred), Some(refs)) = (&cfg.predictions, &cfg.references) else {
        bail!("pass --predictions and --references");
    };
    if cfg.taus.is_empty() {
        bail!("need at least one tau");
    }
    let predictions = load_predictions(pred)?;
    let references = load_references(refs)?;
    let (songs, skipped) = pair(&predictions, &references)?;
    let metrics = evaluate(
        &songs,
        &cfg.taus,
        cfg.true_bound,
        &sweep_thresholds(),
        cfg.bins,
        cfg.range,
        exec,
    )?;
    write_outputs(&cfg.out, &metrics)?;
    tracing::info!(songs = songs.len(), skipped = skipped.len(), out = %cfg.out.display(), "evaluated");
    Ok(EvalReport { metrics, skipped })
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("write {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_outputs(out: &Path, m: &MetricsReport) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    write(&out.join("report.json"), &(serde_json::to_string_pretty(m)? + "\n"))?;

    let taus: Vec<&String> = m.aggregate.mauch.keys().collect();
    let tau_cols: String = taus.iter().map(|t| format!(",mauch_{t}")).collect();
    let mut songs = format!("song_id,n_words,mae,medae,perc{tau_cols}\n");
    for (id, s) in &m.per_song {
        let _ = write!(songs, "{id},{},{},{},{}", s.n_words, s.mae, s.medae, s.perc);
        for t in &taus {
            let _ = write!(songs, ",{}", s.mauch[*t]);
        }
        songs.push('\n');
    }
    write(&out.join("songs.csv"), &songs)?;

    let a = &m.aggregate;
    let mut summary = format!("n_songs,n_words,mae,medae,perc{tau_cols}\n");
    let _ = write!(summary, "{},{},{},{},{}", a.n_songs, a.n_words, a.mae, a.medae, a.perc);
    for t in &taus {
        let _ = write!(summary, ",{}", a.mauch[*t]);
    }
    summary.push('\n');
    write(&out.join("summary.csv"), &summary)?;

    let mut triage = String::from("threshold,tp,fp,tn,fn,precision,recall,f1,accepted,accepted_mae\n");
    for r in &m.triage {
        let c = &r.counts;
        let _ = writeln!(
            triage,
            "{},{},{},{},{},{},{},{},{},{}",
            r.threshold,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            opt(r.precision),
            opt(r.recall),
            opt(r.f1),
            r.accepted,
            opt(r.accepted_mae)
        );
    }
    write(&out.join("triage.csv"), &triage)?;

    let h = &m.histogram;
    let mut hist = String::from("lo,hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(hist, "{},{},{c}", h.edges[i], h.edges[i + 1]);
    }
    let _ = writeln!(hist, "-inf,{},{}", -h.range, h.underflow);
    let _ = writeln!(hist, "{},inf,{}", h.range, h.overflow);
    write(&out.join("histogram.csv"), &hist)?;
    write(&out.join("histogram.svg"), &svg::histogram(h))?;
    write(&out.join("triage.svg"), &svg::triage_curves(&m.triage))?;
    Ok(())
}

/// Plain-text aggregate table for the terminal.
pub fn summary_table(m: &MetricsReport) -> String {
    let a = &m.aggregate;
    let mut s = format!("{:<8} {:>10}\n", "metric", "value");
    let _ = writeln!(s, "{:<8} {:>10}", "songs", a.n_songs);
    let _ = writeln!(s, "{:<8} {:>10}", "words", a.n_words);
    let _ = writeln!(s, "{:<8} {:>10.4}", "MAE", a.mae);
    let _ = writeln!(s, "{:<8} {:>10.4}", "MedAE", a.medae);
    let _ = writeln!(s, "{:<8} {:>10.4}", "Perc", a.perc);
    for (t, v) in &a.mauch {
        let _ = writeln!(s, "{:<8} {:>10.4}", format!("Mauch_{t}"), v);
    }
    let best = m
        .triage
        .iter()
        .filter_map(|r| r.f1.map(|f| (r.threshold, f)))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((h, f1)) = best {
        let _ = writeln!(s, "best triage F1 {f1:.4} at threshold {h}");
    }
    s
}
