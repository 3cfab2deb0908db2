use crate::config::{set, set_opt};
use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use lyralign::datasets::load_manifest;
use lyralign::model::{Level, ModelConfig};
use lyralign::par::Exec;
use lyralign::text::{G2pRegistry, Vocabulary};
use lyralign::training::{load_examples, TrainSpec, Trainer};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const WEIGHTS_FILE: &str = "weights.lyaw";
pub const LOG_FILE: &str = "train_log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    /// Narrow encoders and a two-level UNet; trains in minutes on a CPU.
    Toy,
    Stock,
}

impl ModelSize {
    pub fn config(self, level: Level) -> ModelConfig {
        match self {
            ModelSize::Toy => ModelConfig::toy(level),
            ModelSize::Stock => ModelConfig::stock(level),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_level)]
    pub level: Option<Level>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Training spec (JSON or TOML); keys override the level's stock spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory for weights, loss log and checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelSize>,
    /// Override the training spec's step budget.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from `<out>/checkpoint`.
    #[arg(long)]
    pub resume: bool,
}

fn parse_level(s: &str) -> Result<Level, String> {
    s.parse().map_err(|e: lyralign::Error| e.to_string())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub level: Level,
    pub manifest: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub out: PathBuf,
    pub model: ModelSize,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub resume: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            level: Level::Sentence,
            manifest: None,
            spec: None,
            out: PathBuf::from("model"),
            model: ModelSize::Stock,
            steps: None,
            seed: None,
            resume: false,
        }
    }
}

impl TrainArgs {
    pub fn resolve(&self, file: Option<TrainConfig>) -> anyhow::Result<TrainConfig> {
        let mut c = file.unwrap_or_default();
        set(&mut c.level, self.level);
        set_opt(&mut c.manifest, self.manifest.clone());
        set_opt(&mut c.spec, self.spec.clone());
        set(&mut c.out, self.out.clone());
        set(&mut c.model, self.model);
        set_opt(&mut c.steps, self.steps);
        set_opt(&mut c.seed, self.seed);
        c.resume |= self.resume;
        Ok(c)
    }
}

/// The level's stock spec with the keys of `path` laid over it.
pub fn load_spec(level: Level, path: Option<&Path>) -> anyhow::Result<TrainSpec> {
    let stock = TrainSpec::stock(level);
    let Some(path) = path else {
        return Ok(stock);
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("read spec {}", path.display()))?;
    let overlay: serde_json::Value = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parse spec {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parse spec {}", path.display()))?
    };
    let serde_json::Value::Object(overlay) = overlay else {
        bail!("spec {} must be a table of fields", path.display());
    };
    let mut merged = serde_json::to_value(&stock)?;
    let obj = merged.as_object_mut().expect("spec serialises as an object");
    for (k, v) in overlay {
        obj.insert(k, v);
    }
    let spec: TrainSpec = serde_json::from_value(merged).with_context(|| format!("invalid spec {}", path.display()))?;
    if spec.level != level {
        bail!("spec {} is {}-level but --level is {level}", path.display(), spec.level);
    }
    Ok(spec)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub level: Level,
    pub steps: u64,
    /// Step the run resumed from, if any.
    pub resumed_from: Option<u64>,
    /// Loss of the first logged step.
    pub initial_loss: f64,
    /// Mean loss over the last (up to) ten logged steps.
    pub final_loss: f64,
    pub loss_ratio: f64,
    pub weights: PathBuf,
    pub log: PathBuf,
}

impl TrainSummary {
    pub fn line(&self) -> String {
        format!(
            "{}-level: {} steps, initial loss {:.4}, final loss {:.4}, final/initial {:.4}",
            self.level, self.steps, self.initial_loss, self.final_loss, self.loss_ratio
        )
    }
}

/// Trains one level and writes `weights.lyaw`, `train_log.csv`,
/// `summary.json` and a resumable checkpoint into the output directory.
pub fn cmd_train(cfg: &TrainConfig, exec: Exec) -> anyhow::Result<TrainSummary> {
    let Some(manifest) = &cfg.manifest else {
        bail!("missing --manifest");
    };
    let mut spec = load_spec(cfg.level, cfg.spec.as_deref())?;
    set(&mut spec.max_steps, cfg.steps);
    set(&mut spec.seed, cfg.seed);
    crate::config::log_resolved("train spec", &spec);

    let vocab = Vocabulary::v1();
    let g2p = G2pRegistry::bundled(Arc::new(vocab.clone()));
    let records = load_manifest(manifest)?;
    let corpus = load_examples(&records, &g2p, &vocab, exec).context("load training songs")?;
    tracing::info!(songs = corpus.len(), level = %cfg.level, "loaded corpus");

    let ckpt = cfg.out.join(CHECKPOINT_DIR);
    let mut trainer = if cfg.resume {
        Trainer::resume(spec.clone(), &corpus, &ckpt).with_context(|| format!("resume from {}", ckpt.display()))?
    } else {
        Trainer::new(spec.clone(), &corpus, cfg.model.config(cfg.level))?
    };
    trainer = trainer.with_exec(exec);
    let resumed_from = cfg.resume.then(|| trainer.step_count());
    if let Some(step) = resumed_from {
        tracing::info!(step, "resumed");
    }
    trainer.run(Some(&ckpt))?;

    std::fs::create_dir_all(&cfg.out).with_context(|| format!("create {}", cfg.out.display()))?;
    let weights = cfg.out.join(WEIGHTS_FILE);
    let log_path = cfg.out.join(LOG_FILE);
    trainer.weights().save(&weights)?;
    let log = trainer.log();
    log.write_csv(&log_path)?;

    let Some(initial_loss) = log.first_loss() else {
        bail!("no training steps were run");
    };
    let tail = &log.rows[log.rows.len().saturating_sub(10)..];
    let final_loss = tail.iter().map(|r| r.loss).sum::<f64>() / tail.len() as f64;
    let summary = TrainSummary {
        level: cfg.level,
        steps: trainer.step_count(),
        resumed_from,
        initial_loss,
        final_loss,
        loss_ratio: final_loss / initial_loss,
        weights,
        log: log_path,
    };
    let path = cfg.out.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("write {}", path.display()))?;
    tracing::info!("{}", summary.line());
    Ok(summary)
}
