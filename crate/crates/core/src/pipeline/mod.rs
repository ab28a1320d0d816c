//! Queue-driven ingestion and recommendation pre-computation.
//!
//! Events are pushed to the `events` queue and acknowledged immediately.
//! Event workers pop them, insert them into the graph and push to the
//! `recbuild` queue every user whose traversal can reach the changed user;
//! recbuild workers traverse from each such user and store the ranked list in
//! the cache under `rec:<user>`. A user already waiting in the queue is not
//! queued twice. Delivery is at-least-once: a failed step re-queues its
//! payload at the tail, so a replay after a crash can inflate edge counts.

mod backend;

pub use backend::{BackendError, CacheBackend, FileCache, FileQueue, MemoryCache, MemoryQueue, QueueBackend};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{error, warn};

use crate::error::ValidationError;
use crate::graph::{Graph, ImportReport, InteractionEvent};
use crate::scoring::{self, RecommendationList, ScoringParams};

pub const EVENT_QUEUE: &str = "events";
pub const RECBUILD_QUEUE: &str = "recbuild";

pub fn cache_key(user: &str) -> String {
    format!("rec:{user}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub event_workers: usize,
    pub recbuild_workers: usize,
    pub scoring: ScoringParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            event_workers: 2,
            recbuild_workers: 2,
            scoring: ScoringParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.event_workers == 0 || self.recbuild_workers == 0 {
            return Err(ValidationError::Invalid("worker counts must be at least 1".into()));
        }
        self.scoring.validate()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("corrupt cache entry for {key}: {source}")]
    CorruptEntry {
        key: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Monotone counters; readers may observe slightly stale values.
#[derive(Debug, Default)]
pub struct PipelineStats {
    pub events_enqueued: AtomicU64,
    pub events_applied: AtomicU64,
    pub events_dropped: AtomicU64,
    pub insert_failures: AtomicU64,
    pub traversals: AtomicU64,
    pub traversal_nanos: AtomicU64,
    pub traversal_failures: AtomicU64,
    pub cache_hits: AtomicU64,
    pub cache_misses: AtomicU64,
}

impl PipelineStats {
    pub fn mean_traversal_ms(&self) -> f64 {
        let n = self.traversals.load(Ordering::Relaxed);
        if n == 0 {
            return 0.0;
        }
        self.traversal_nanos.load(Ordering::Relaxed) as f64 / n as f64 / 1e6
    }
}

/// Fault injection for exercising the retry paths.
#[derive(Debug, Default)]
pub struct FaultHooks {
    pub failing_inserts: AtomicUsize,
    pub failing_traversals: AtomicUsize,
}

fn take_fault(counter: &AtomicUsize) -> bool {
    counter
        .fetch_update(Ordering::AcqRel, Ordering::Acquire, |n| n.checked_sub(1))
        .is_ok()
}

pub struct Pipeline {
    graph: Arc<RwLock<Graph>>,
    queue: Arc<dyn QueueBackend>,
    cache: Arc<dyn CacheBackend>,
    config: PipelineConfig,
    stats: PipelineStats,
    faults: FaultHooks,
    /// Events popped but not yet inserted.
    events_in_flight: AtomicUsize,
    recbuilds_in_flight: AtomicUsize,
    /// Users sitting in the recbuild queue.
    pending: Mutex<HashSet<String>>,
    /// Graph event count each cached list was computed from; an older
    /// traversal never overwrites a newer one.
    built_at: Mutex<HashMap<String, u64>>,
}

impl Pipeline {
    pub fn new(
        graph: Graph,
        queue: Arc<dyn QueueBackend>,
        cache: Arc<dyn CacheBackend>,
        config: PipelineConfig,
    ) -> Result<Self, ValidationError> {
        config.validate()?;
        Ok(Self {
            graph: Arc::new(RwLock::new(graph)),
            queue,
            cache,
            config,
            stats: PipelineStats::default(),
            faults: FaultHooks::default(),
            events_in_flight: AtomicUsize::new(0),
            recbuilds_in_flight: AtomicUsize::new(0),
            pending: Mutex::new(HashSet::new()),
            built_at: Mutex::new(HashMap::new()),
        })
    }

    /// Pipeline over the volatile in-process backends.
    pub fn in_memory(graph: Graph, config: PipelineConfig) -> Result<Self, ValidationError> {
        Self::new(
            graph,
            Arc::new(MemoryQueue::new()),
            Arc::new(MemoryCache::new()),
            config,
        )
    }

    pub fn graph(&self) -> &Arc<RwLock<Graph>> {
        &self.graph
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn stats(&self) -> &PipelineStats {
        &self.stats
    }

    pub fn faults(&self) -> &FaultHooks {
        &self.faults
    }

    pub fn queue_depth(&self, queue: &str) -> Result<usize, BackendError> {
        self.queue.depth(queue)
    }

    pub fn enqueue_event(&self, event: &InteractionEvent) -> Result<(), PipelineError> {
        event.validate()?;
        let payload = serde_json::to_string(event).expect("events always serialize");
        self.queue.push(EVENT_QUEUE, payload)?;
        self.stats.events_enqueued.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Queue a cache rebuild for `user` unless one is already waiting.
    pub fn schedule_rebuild(&self, user: &str) -> Result<(), BackendError> {
        if !self.pending.lock().insert(user.to_owned()) {
            return Ok(());
        }
        self.queue.push(RECBUILD_QUEUE, user.to_owned()).inspect_err(|_| {
            self.pending.lock().remove(user);
        })
    }

    /// Users whose cached lists can change when `changed` users gain edges.
    /// One hop past the traversal depth covers items reached at the last level.
    fn affected_users<'a>(&self, graph: &Graph, changed: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        graph.users_near(changed, self.config.scoring.depth + 1)
    }

    /// Insert events straight into the graph, bypassing the event queue,
    /// then schedule a rebuild for every affected user. Meant for bulk loads
    /// before serving.
    pub fn bulk_import<I>(&self, events: I) -> Result<ImportReport, BackendError>
    where
        I: IntoIterator<Item = InteractionEvent>,
    {
        let mut users = BTreeSet::new();
        let (report, affected) = {
            let mut graph = self.graph.write();
            let report = graph.batch_import(events.into_iter().inspect(|e| {
                if e.validate().is_ok() && !users.contains(e.user.as_str()) {
                    users.insert(e.user.clone());
                }
            }));
            (report, self.affected_users(&graph, users.iter().map(String::as_str)))
        };
        self.stats.events_enqueued.fetch_add(report.imported, Ordering::Relaxed);
        self.stats.events_applied.fetch_add(report.imported, Ordering::Relaxed);
        for user in &affected {
            self.schedule_rebuild(user)?;
        }
        Ok(report)
    }

    /// Pop one event, insert it and schedule rebuilds for affected users.
    /// Returns the number of events processed (0 when the queue is empty).
    pub fn event_worker_step(&self) -> Result<usize, PipelineError> {
        self.events_in_flight.fetch_add(1, Ordering::SeqCst);
        let result = self.event_step_inner();
        self.events_in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn event_step_inner(&self) -> Result<usize, PipelineError> {
        let Some(payload) = self.queue.pop(EVENT_QUEUE)? else {
            return Ok(0);
        };
        let event: InteractionEvent = match serde_json::from_str(&payload) {
            Ok(event) => event,
            Err(err) => {
                error!(%err, "dropping undecodable event payload");
                self.stats.events_dropped.fetch_add(1, Ordering::Relaxed);
                return Ok(1);
            }
        };
        if let Err(err) = event.validate() {
            // retrying cannot fix an invalid payload
            error!(%err, "dropping invalid event payload");
            self.stats.events_dropped.fetch_add(1, Ordering::Relaxed);
            return Ok(1);
        }
        if take_fault(&self.faults.failing_inserts) {
            error!(user = %event.user, "insert failed, re-queueing event");
            self.stats.insert_failures.fetch_add(1, Ordering::Relaxed);
            self.queue.push(EVENT_QUEUE, payload)?;
            return Ok(1);
        }
        let affected = {
            let mut graph = self.graph.write();
            graph.upsert_interaction(&event).expect("event validated above");
            self.affected_users(&graph, [event.user.as_str()])
        };
        self.stats.events_applied.fetch_add(1, Ordering::Relaxed);
        for user in &affected {
            self.schedule_rebuild(user)?;
        }
        Ok(1)
    }

    /// Pop one user id, rebuild and cache its list.
    pub fn recbuild_worker_step(&self) -> Result<usize, PipelineError> {
        self.recbuilds_in_flight.fetch_add(1, Ordering::SeqCst);
        let result = self.recbuild_step_inner();
        self.recbuilds_in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn recbuild_step_inner(&self) -> Result<usize, PipelineError> {
        let Some(user) = self.queue.pop(RECBUILD_QUEUE)? else {
            return Ok(0);
        };
        // cleared before the traversal so a concurrent change re-queues the user
        self.pending.lock().remove(&user);
        if take_fault(&self.faults.failing_traversals) {
            error!(%user, "traversal failed, re-queueing user");
            self.stats.traversal_failures.fetch_add(1, Ordering::Relaxed);
            self.schedule_rebuild(&user)?;
            return Ok(1);
        }
        let (list, generation) = self.recommend_at_generation(&user);
        let body = serde_json::to_string(&list).expect("recommendation lists always serialize");
        let mut built_at = self.built_at.lock();
        if built_at.get(&user).is_some_and(|&g| g > generation) {
            return Ok(1);
        }
        self.cache.put(&cache_key(&user), body)?;
        built_at.insert(user, generation);
        Ok(1)
    }

    fn recommend_at_generation(&self, user: &str) -> (RecommendationList, u64) {
        let started = Instant::now();
        let (list, generation) = {
            let graph = self.graph.read();
            (scoring::recommend(&graph, user, &self.config.scoring), graph.event_count())
        };
        self.stats.traversals.fetch_add(1, Ordering::Relaxed);
        self.stats
            .traversal_nanos
            .fetch_add(started.elapsed().as_nanos() as u64, Ordering::Relaxed);
        (list, generation)
    }

    /// Run a traversal against the current graph, recording timing stats.
    pub fn recommend_live(&self, user: &str, params: &ScoringParams) -> RecommendationList {
        let started = Instant::now();
        let list = {
            let graph = self.graph.read();
            scoring::recommend(&graph, user, params)
        };
        self.stats.traversals.fetch_add(1, Ordering::Relaxed);
        self.stats
            .traversal_nanos
            .fetch_add(started.elapsed().as_nanos() as u64, Ordering::Relaxed);
        list
    }

    /// Raw cached JSON for `user`, counting hits and misses.
    pub fn get_cached_raw(&self, user: &str) -> Result<Option<Arc<str>>, BackendError> {
        let hit = self.cache.get(&cache_key(user))?;
        let counter = if hit.is_some() {
            &self.stats.cache_hits
        } else {
            &self.stats.cache_misses
        };
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(hit)
    }

    pub fn get_cached_recommendations(
        &self,
        user: &str,
    ) -> Result<Option<RecommendationList>, PipelineError> {
        match self.get_cached_raw(user)? {
            None => Ok(None),
            Some(raw) => serde_json::from_str(&raw)
                .map(Some)
                .map_err(|source| PipelineError::CorruptEntry {
                    key: cache_key(user),
                    source,
                }),
        }
    }

    /// True when no event is queued or being inserted.
    pub fn events_settled(&self) -> Result<bool, BackendError> {
        // depth before in-flight: a worker marks itself in flight before popping
        Ok(self.queue.depth(EVENT_QUEUE)? == 0 && self.events_in_flight.load(Ordering::SeqCst) == 0)
    }

    pub fn is_quiescent(&self) -> Result<bool, BackendError> {
        Ok(self.events_settled()?
            && self.queue.depth(RECBUILD_QUEUE)? == 0
            && self.recbuilds_in_flight.load(Ordering::SeqCst) == 0)
    }

    /// Drain synchronously on the calling thread: all events first, then
    /// every queued rebuild.
    pub fn drain(&self) -> Result<(), PipelineError> {
        while self.event_worker_step()? > 0 {}
        while self.recbuild_worker_step()? > 0 {}
        Ok(())
    }

    /// Block until quiescent or until `timeout` elapses.
    pub fn wait_quiescent(&self, timeout: Duration) -> Result<bool, BackendError> {
        let deadline = Instant::now() + timeout;
        loop {
            if self.is_quiescent()? {
                return Ok(true);
            }
            if Instant::now() >= deadline {
                return Ok(false);
            }
            thread::sleep(Duration::from_millis(1));
        }
    }

    /// Start the configured number of worker threads.
    ///
    /// Recbuild workers hold off while events are still queued or being
    /// inserted, so lists built at quiescence reflect the final graph.
    pub fn spawn_workers(self: &Arc<Self>) -> Workers {
        let stop = Arc::new(AtomicBool::new(false));
        let mut handles = Vec::new();
        for _ in 0..self.config.event_workers {
            let pipeline = Arc::clone(self);
            let stop = Arc::clone(&stop);
            handles.push(thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match pipeline.event_worker_step() {
                        Ok(0) => thread::sleep(IDLE_WAIT),
                        Ok(_) => {}
                        Err(err) => {
                            warn!(%err, "event worker step failed");
                            thread::sleep(IDLE_WAIT);
                        }
                    }
                }
            }));
        }
        for _ in 0..self.config.recbuild_workers {
            let pipeline = Arc::clone(self);
            let stop = Arc::clone(&stop);
            handles.push(thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    if !pipeline.events_settled().unwrap_or(false) {
                        thread::sleep(IDLE_WAIT);
                        continue;
                    }
                    match pipeline.recbuild_worker_step() {
                        Ok(0) => thread::sleep(IDLE_WAIT),
                        Ok(_) => {}
                        Err(err) => {
                            warn!(%err, "recbuild worker step failed");
                            thread::sleep(IDLE_WAIT);
                        }
                    }
                }
            }));
        }
        Workers { stop, handles }
    }
}

const IDLE_WAIT: Duration = Duration::from_millis(2);

/// Running worker threads; stopped and joined on drop.
pub struct Workers {
    stop: Arc<AtomicBool>,
    handles: Vec<JoinHandle<()>>,
}

impl Workers {
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for handle in self.handles.drain(..) {
            let _ = handle.join();
        }
    }
}

impl Drop for Workers {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}
