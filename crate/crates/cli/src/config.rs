use anyhow::Context;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Contents of a `--config` file. Each table uses the field names of the
/// matching subcommand's resolved config.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub align: Option<crate::align::AlignConfig>,
    pub train: Option<crate::train::TrainConfig>,
    pub eval: Option<crate::eval::EvalConfig>,
    pub triage: Option<crate::triage::TriageConfig>,
    pub synth: Option<crate::synth::SynthCmdConfig>,
    pub bench: Option<crate::bench::BenchConfig>,
    pub serve: Option<crate::serve::ServeCmdConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parse config {}", path.display()))
    }
}

pub fn log_resolved<T: Serialize>(subcommand: &str, cfg: &T) {
    match serde_json::to_string(cfg) {
        Ok(json) => tracing::info!(subcommand, config = %json, "resolved config"),
        Err(e) => tracing::warn!(subcommand, "could not serialise config: {e}"),
    }
}

/// Overwrites `slot` when the flag was given.
pub(crate) fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Sets `slot` when the flag was given.
pub(crate) fn set_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}
