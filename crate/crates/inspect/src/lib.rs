//! HTTP review service: a confidence-ranked queue of aligned songs, per-song
//! alignment detail with a probability heatmap, and correction/status
//! endpoints backed by a [`lyralign::datasets::Store`].

mod heatmap;
mod routes;

pub use heatmap::{max_pool, Heatmap, MAX_SIDE};
pub use routes::{router, AlignmentView, AppState, QueueEntry, QueuePage, DEFAULT_LOW_CONFIDENCE};

use lyralign::datasets::Store;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub const DEFAULT_PORT: u16 = 8765;

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
    /// Directory of a built review UI, served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Units below this confidence count as low-confidence in the queue.
    pub low_confidence: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            cors_origin: None,
            ui_dir: None,
            low_confidence: DEFAULT_LOW_CONFIDENCE,
        }
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(store: Store, config: ServeConfig) -> std::io::Result<()> {
    let app = router(AppState::new(Arc::new(store), config.low_confidence), &config);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "review service listening");
    axum::serve(listener, app).await
}
