use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use tracing::{info, warn};
use usagegraph_core::eval::{read_search_log, SearchLogEntry};
use usagegraph_core::graph::{Graph, ImportReport};
use usagegraph_core::InteractionEvent;
use usagegraph_core::pipeline::{
    CacheBackend, FileCache, FileQueue, MemoryCache, MemoryQueue, Pipeline, QueueBackend, Workers,
};

use crate::config::{BackendKind, ServiceConfig};
use crate::error::ServiceError;

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct ClickTally {
    pub count: u64,
    pub position_sum: u64,
}

pub struct Inner {
    pub(crate) config: ServiceConfig,
    pub(crate) pipeline: Arc<Pipeline>,
    pub(crate) personalization: AtomicBool,
    pub(crate) scoring_fault: AtomicBool,
    pub(crate) rerank_calls: AtomicU64,
    pub(crate) degraded_responses: AtomicU64,
    pub(crate) clicks: Mutex<BTreeMap<String, ClickTally>>,
    pub(crate) search_log: Option<Mutex<File>>,
    memory_queue: Option<Arc<MemoryQueue>>,
    memory_cache: Option<Arc<MemoryCache>>,
}

/// Shared handler state.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

impl AppState {
    /// Build state around `graph` without starting workers.
    pub fn new(config: ServiceConfig, graph: Graph) -> Result<Self, ServiceError> {
        config.validate()?;
        let (queue, cache, memory_queue, memory_cache): (
            Arc<dyn QueueBackend>,
            Arc<dyn CacheBackend>,
            _,
            _,
        ) = match config.pipeline.backend {
            BackendKind::Memory => {
                let q = Arc::new(MemoryQueue::new());
                let c = Arc::new(MemoryCache::new());
                (q.clone(), c.clone(), Some(q), Some(c))
            }
            BackendKind::File => {
                let dir = config.pipeline.data_dir.as_ref().expect("validated");
                (
                    Arc::new(FileQueue::open(dir.join("queue"))?),
                    Arc::new(FileCache::open(dir.join("cache"))?),
                    None,
                    None,
                )
            }
        };
        let pipeline = Arc::new(Pipeline::new(graph, queue, cache, config.pipeline_config())?);

        let mut clicks = BTreeMap::new();
        let search_log = match &config.stats_log_path {
            None => None,
            Some(path) => {
                if path.exists() {
                    match read_search_log(BufReader::new(File::open(path)?)) {
                        Ok(entries) => {
                            for e in &entries {
                                tally(&mut clicks, e);
                            }
                            info!(entries = entries.len(), "replayed search log");
                        }
                        Err(err) => warn!(%err, "search log unreadable, starting counts at zero"),
                    }
                }
                Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?))
            }
        };

        Ok(Self(Arc::new(Inner {
            personalization: AtomicBool::new(config.personalization_enabled),
            config,
            pipeline,
            scoring_fault: AtomicBool::new(false),
            rerank_calls: AtomicU64::new(0),
            degraded_responses: AtomicU64::new(0),
            clicks: Mutex::new(clicks),
            search_log,
            memory_queue,
            memory_cache,
        })))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    pub fn pipeline(&self) -> &Arc<Pipeline> {
        &self.0.pipeline
    }

    pub fn spawn_workers(&self) -> Workers {
        self.0.pipeline.spawn_workers()
    }

    pub fn set_personalization(&self, enabled: bool) {
        self.0.personalization.store(enabled, Ordering::SeqCst);
    }

    pub fn personalization_enabled(&self) -> bool {
        self.0.personalization.load(Ordering::SeqCst)
    }

    /// Test hook: make every recommendation lookup in /rerank fail.
    pub fn set_scoring_fault(&self, failing: bool) {
        self.0.scoring_fault.store(failing, Ordering::SeqCst);
    }

    /// Test hook: take the in-memory queue and cache offline. No effect on
    /// file backends.
    pub fn set_backend_down(&self, down: bool) {
        if let Some(q) = &self.0.memory_queue {
            q.set_down(down);
        }
        if let Some(c) = &self.0.memory_cache {
            c.set_down(down);
        }
    }

    /// Bulk-load an NDJSON event file straight into the graph and queue a
    /// rebuild for every user in it.
    pub fn import_ndjson(&self, path: impl AsRef<Path>) -> Result<ImportReport, ServiceError> {
        let reader = BufReader::new(File::open(path)?);
        let mut unparsed = 0u64;
        let mut io_error = None;
        let events = reader
            .lines()
            .map_while(|line| line.map_err(|e| io_error = Some(e)).ok())
            .filter(|line| {
                let t = line.trim();
                !t.is_empty() && !t.starts_with('#')
            })
            .filter_map(|line| match serde_json::from_str::<InteractionEvent>(&line) {
                Ok(event) => Some(event),
                Err(err) => {
                    warn!(%err, "unparseable event line");
                    unparsed += 1;
                    None
                }
            });
        let mut report = self.0.pipeline.bulk_import(events)?;
        if let Some(err) = io_error {
            return Err(err.into());
        }
        report.rejected += unparsed;
        info!(imported = report.imported, rejected = report.rejected, "bulk import finished");
        Ok(report)
    }

    pub(crate) fn record_click(&self, entry: &SearchLogEntry) -> std::io::Result<()> {
        if let Some(log) = &self.0.search_log {
            let mut line = serde_json::to_string(entry).expect("log entries serialize");
            line.push('\n');
            let mut file = log.lock();
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        tally(&mut self.0.clicks.lock(), entry);
        Ok(())
    }
}

fn tally(clicks: &mut BTreeMap<String, ClickTally>, entry: &SearchLogEntry) {
    let slot = clicks.entry(entry.method.clone()).or_default();
    slot.count += 1;
    slot.position_sum += entry.click_position as u64;
}
