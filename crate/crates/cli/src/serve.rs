use crate::config::{set, set_opt};
use anyhow::{bail, Context};
use clap::Args;
use lyralign::datasets::Store;
use lyralign_inspect::{ServeConfig, DEFAULT_LOW_CONFIDENCE, DEFAULT_PORT};
use serde::{Deserialize, Serialize};
use std::net::SocketAddr;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Listen address.
    #[arg(long)]
    pub addr: Option<SocketAddr>,
    /// Allowed browser origin (default: any).
    #[arg(long)]
    pub cors_origin: Option<String>,
    /// Built review UI to serve at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Units below this confidence are counted as low-confidence.
    #[arg(long)]
    pub low_confidence: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeCmdConfig {
    pub manifest: Option<PathBuf>,
    pub addr: SocketAddr,
    pub cors_origin: Option<String>,
    pub ui_dir: Option<PathBuf>,
    pub low_confidence: f64,
}

impl Default for ServeCmdConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            cors_origin: None,
            ui_dir: None,
            low_confidence: DEFAULT_LOW_CONFIDENCE,
        }
    }
}

impl ServeArgs {
    pub fn resolve(&self, file: Option<ServeCmdConfig>) -> anyhow::Result<ServeCmdConfig> {
        let mut c = file.unwrap_or_default();
        set_opt(&mut c.manifest, self.manifest.clone());
        set(&mut c.addr, self.addr);
        set_opt(&mut c.cors_origin, self.cors_origin.clone());
        set_opt(&mut c.ui_dir, self.ui_dir.clone());
        set(&mut c.low_confidence, self.low_confidence);
        Ok(c)
    }
}

/// Opens the store and serves the review API until interrupted.
pub fn cmd_serve(cfg: &ServeCmdConfig) -> anyhow::Result<()> {
    let Some(manifest) = &cfg.manifest else {
        bail!("missing --manifest");
    };
    let store = Store::open(manifest)?;
    let config = ServeConfig {
        addr: cfg.addr,
        cors_origin: cfg.cors_origin.clone(),
        ui_dir: cfg.ui_dir.clone(),
        low_confidence: cfg.low_confidence,
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("start async runtime")?;
    rt.block_on(lyralign_inspect::serve(store, config))
        .with_context(|| format!("serve on {}", cfg.addr))
}
