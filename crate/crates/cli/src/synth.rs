use crate::config::set;
use clap::Args;
use lyralign::text::Vocabulary;
use lyralign::training::{synth_corpus, write_synth_corpus, SynthConfig};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of songs.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthCmdConfig {
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Generator ranges; only settable from the config file.
    pub generator: SynthConfig,
}

impl Default for SynthCmdConfig {
    fn default() -> Self {
        Self {
            n: 20,
            seed: 0,
            out: PathBuf::from("synth"),
            generator: SynthConfig::default(),
        }
    }
}

impl SynthArgs {
    pub fn resolve(&self, file: Option<SynthCmdConfig>) -> anyhow::Result<SynthCmdConfig> {
        let mut c = file.unwrap_or_default();
        set(&mut c.n, self.n);
        set(&mut c.seed, self.seed);
        set(&mut c.out, self.out.clone());
        Ok(c)
    }
}

/// Writes a corpus (feature caches, lyrics, labels, manifest) and returns
/// the manifest path.
pub fn cmd_synth(cfg: &SynthCmdConfig) -> anyhow::Result<PathBuf> {
    let songs = synth_corpus(cfg.n, cfg.seed, &Vocabulary::v1(), &cfg.generator)?;
    let manifest = write_synth_corpus(&cfg.out, &songs)?;
    tracing::info!(songs = songs.len(), manifest = %manifest.display(), "synthetic corpus written");
    Ok(manifest)
}
