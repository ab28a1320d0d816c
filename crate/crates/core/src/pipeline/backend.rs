//! Queue and cache backends.
//!
//! The in-memory backends lose their contents when the process exits. The
//! file backends keep an append-only log on disk and replay it on open.

use std::collections::{HashMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend i/o: {0}")]
    Io(#[from] io::Error),
}

/// Named FIFO queues. A popped payload is handed to exactly one caller.
pub trait QueueBackend: Send + Sync {
    fn push(&self, queue: &str, payload: String) -> Result<(), BackendError>;
    fn pop(&self, queue: &str) -> Result<Option<String>, BackendError>;
    fn depth(&self, queue: &str) -> Result<usize, BackendError>;
}

/// Key/value store with per-key atomic replace.
pub trait CacheBackend: Send + Sync {
    fn put(&self, key: &str, value: String) -> Result<(), BackendError>;
    fn get(&self, key: &str) -> Result<Option<Arc<str>>, BackendError>;
}

/// Switch that lets tests and operators take a backend offline.
#[derive(Debug, Default)]
struct Availability(AtomicBool);

impl Availability {
    fn check(&self) -> Result<(), BackendError> {
        if self.0.load(Ordering::Relaxed) {
            Err(BackendError::Unavailable("marked down".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Default)]
pub struct MemoryQueue {
    queues: Mutex<HashMap<String, VecDeque<String>>>,
    down: Availability,
}

impl MemoryQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_down(&self, down: bool) {
        self.down.0.store(down, Ordering::Relaxed);
    }
}

impl QueueBackend for MemoryQueue {
    fn push(&self, queue: &str, payload: String) -> Result<(), BackendError> {
        self.down.check()?;
        let mut queues = self.queues.lock();
        match queues.get_mut(queue) {
            Some(q) => q.push_back(payload),
            None => {
                queues.insert(queue.to_owned(), VecDeque::from([payload]));
            }
        }
        Ok(())
    }

    fn pop(&self, queue: &str) -> Result<Option<String>, BackendError> {
        self.down.check()?;
        Ok(self.queues.lock().get_mut(queue).and_then(VecDeque::pop_front))
    }

    fn depth(&self, queue: &str) -> Result<usize, BackendError> {
        self.down.check()?;
        Ok(self.queues.lock().get(queue).map_or(0, VecDeque::len))
    }
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: RwLock<HashMap<String, Arc<str>>>,
    down: Availability,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_down(&self, down: bool) {
        self.down.0.store(down, Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl CacheBackend for MemoryCache {
    fn put(&self, key: &str, value: String) -> Result<(), BackendError> {
        self.down.check()?;
        self.entries.write().insert(key.to_owned(), Arc::from(value));
        Ok(())
    }

    fn get(&self, key: &str) -> Result<Option<Arc<str>>, BackendError> {
        self.down.check()?;
        Ok(self.entries.read().get(key).cloned())
    }
}

/// One queue on disk: `<name>.queue` holds JSON-encoded payload lines,
/// `<name>.head` the number of lines already consumed.
#[derive(Debug)]
struct DiskQueue {
    log: File,
    head_path: PathBuf,
    consumed: u64,
    pending: VecDeque<String>,
}

impl DiskQueue {
    fn open(dir: &Path, name: &str) -> Result<Self, BackendError> {
        let log_path = dir.join(format!("{name}.queue"));
        let head_path = dir.join(format!("{name}.head"));
        let consumed: u64 = match fs::read_to_string(&head_path) {
            Ok(text) => text.trim().parse().map_err(|_| {
                BackendError::Io(io::Error::new(io::ErrorKind::InvalidData, "bad queue head"))
            })?,
            Err(err) if err.kind() == io::ErrorKind::NotFound => 0,
            Err(err) => return Err(err.into()),
        };
        let mut pending = VecDeque::new();
        if log_path.exists() {
            let reader = BufReader::new(File::open(&log_path)?);
            for line in reader.lines().skip(consumed as usize) {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let payload: String = serde_json::from_str(&line).map_err(io::Error::from)?;
                pending.push_back(payload);
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok(Self {
            log,
            head_path,
            consumed,
            pending,
        })
    }

    fn push(&mut self, payload: String) -> Result<(), BackendError> {
        let mut line = serde_json::to_string(&payload).map_err(io::Error::from)?;
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.flush()?;
        self.pending.push_back(payload);
        Ok(())
    }

    fn pop(&mut self) -> Result<Option<String>, BackendError> {
        let Some(payload) = self.pending.pop_front() else {
            return Ok(None);
        };
        if self.pending.is_empty() {
            // fully drained: start a fresh log
            self.log.set_len(0)?;
            self.consumed = 0;
        } else {
            self.consumed += 1;
        }
        fs::write(&self.head_path, self.consumed.to_string())?;
        Ok(Some(payload))
    }
}

/// Durable queue backed by per-queue append-only files in one directory.
#[derive(Debug)]
pub struct FileQueue {
    dir: PathBuf,
    queues: Mutex<HashMap<String, DiskQueue>>,
}

impl FileQueue {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            queues: Mutex::new(HashMap::new()),
        })
    }

    fn with_queue<T>(
        &self,
        name: &str,
        f: impl FnOnce(&mut DiskQueue) -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(BackendError::Unavailable(format!("invalid queue name {name:?}")));
        }
        let mut queues = self.queues.lock();
        if !queues.contains_key(name) {
            let queue = DiskQueue::open(&self.dir, name)?;
            queues.insert(name.to_owned(), queue);
        }
        f(queues.get_mut(name).expect("inserted above"))
    }
}

impl QueueBackend for FileQueue {
    fn push(&self, queue: &str, payload: String) -> Result<(), BackendError> {
        self.with_queue(queue, |q| q.push(payload))
    }

    fn pop(&self, queue: &str) -> Result<Option<String>, BackendError> {
        self.with_queue(queue, DiskQueue::pop)
    }

    fn depth(&self, queue: &str) -> Result<usize, BackendError> {
        self.with_queue(queue, |q| Ok(q.pending.len()))
    }
}

#[derive(Serialize)]
struct CacheRecord<'a> {
    k: &'a str,
    v: &'a str,
}

#[derive(Deserialize)]
struct StoredRecord {
    k: String,
    v: String,
}

/// Durable cache: an in-memory map plus an append-only `cache.log`
/// replayed (last write wins) on open.
#[derive(Debug)]
pub struct FileCache {
    entries: RwLock<HashMap<String, Arc<str>>>,
    log: Mutex<File>,
}

impl FileCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, BackendError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join("cache.log");
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let record: StoredRecord = serde_json::from_str(&line).map_err(io::Error::from)?;
                entries.insert(record.k, Arc::from(record.v));
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            entries: RwLock::new(entries),
            log: Mutex::new(log),
        })
    }
}

impl CacheBackend for FileCache {
    fn put(&self, key: &str, value: String) -> Result<(), BackendError> {
        let mut line = serde_json::to_string(&CacheRecord { k: key, v: &value }).map_err(io::Error::from)?;
        line.push('\n');
        {
            let mut log = self.log.lock();
            log.write_all(line.as_bytes())?;
            log.flush()?;
        }
        self.entries.write().insert(key.to_owned(), Arc::from(value));
        Ok(())
    }

    fn get(&self, key: &str) -> Result<Option<Arc<str>>, BackendError> {
        Ok(self.entries.read().get(key).cloned())
    }
}
