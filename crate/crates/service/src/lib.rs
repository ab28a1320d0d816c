//! HTTP front end for the usage graph: event intake, cached and live
//! recommendations, re-ranking of external result lists, search-log
//! collection, counters and graph export.
//!
//! | route | method |
//! |---|---|
//! | `/events` | POST |
//! | `/users/{id}/recommendations` | GET |
//! | `/rerank` | POST |
//! | `/search-log` | POST |
//! | `/stats` | GET |
//! | `/graph/export` | GET |
//! | `/admin/personalization` | POST |

mod config;
mod error;
mod routes;
mod state;

use std::future::Future;
use std::path::Path;

use tokio::net::TcpListener;
use tracing::info;
use usagegraph_core::graph::{Graph, ImportReport};
use usagegraph_core::pipeline::Workers;

pub use config::{BackendKind, PipelineSection, ServiceConfig};
pub use error::{ApiError, ServiceError};
pub use routes::router;
pub use state::AppState;

/// A configured service with its pipeline workers running.
pub struct Service {
    state: AppState,
    workers: Option<Workers>,
}

impl Service {
    /// Load the snapshot (if configured and present) and start workers.
    pub fn start(config: ServiceConfig) -> Result<Self, ServiceError> {
        let graph = match &config.snapshot_path {
            Some(path) if path.exists() => {
                let graph = Graph::load_snapshot(path)?;
                info!(path = %path.display(), edges = graph.edge_count(), "snapshot loaded");
                graph
            }
            _ => Graph::new(),
        };
        let state = AppState::new(config, graph)?;
        let workers = Some(state.spawn_workers());
        Ok(Self { state, workers })
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    pub fn router(&self) -> axum::Router {
        router(self.state.clone())
    }

    /// Bulk-load an NDJSON event file straight into the graph and queue a
    /// rebuild for every user in it.
    pub fn import_ndjson(&self, path: impl AsRef<Path>) -> Result<ImportReport, ServiceError> {
        self.state.import_ndjson(path)
    }

    /// Stop workers and write the snapshot when one is configured.
    pub fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(workers) = self.workers.take() {
            workers.shutdown();
        }
        if let Some(path) = &self.state.config().snapshot_path {
            self.state.pipeline().graph().read().save_snapshot(path)?;
            info!(path = %path.display(), "snapshot written");
        }
        Ok(())
    }

    /// Serve on `listener` until `signal` resolves, then shut down.
    pub async fn serve(self, listener: TcpListener, signal: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
        info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, self.router())
            .with_graceful_shutdown(signal)
            .await?;
        tokio::task::spawn_blocking(move || self.shutdown())
            .await
            .map_err(|e| ServiceError::Io(std::io::Error::other(e)))?
    }
}
