//! Bipartite user–item usage graph.
//!
//! Every (user, item) pair is collapsed into a single [`UsageEdge`] carrying
//! per-verb counts and the first/last interaction timestamps. Users and items
//! live in separate id namespaces, so the same string may name both a user
//! and an item without colliding.
//!
//! Adjacency queries are deterministic: edges come back ordered by `last_ts`
//! descending, then item id ascending, then user id ascending.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::error::ValidationError;

/// One timestamped usage record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractionEvent {
    /// Seconds since the Unix epoch.
    pub ts: i64,
    pub user: String,
    pub item: String,
    pub verb: String,
}

impl InteractionEvent {
    pub fn new(
        ts: i64,
        user: impl Into<String>,
        item: impl Into<String>,
        verb: impl Into<String>,
    ) -> Self {
        Self {
            ts,
            user: user.into(),
            item: item.into(),
            verb: verb.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.user.is_empty() {
            return Err(ValidationError::EmptyUser);
        }
        if self.item.is_empty() {
            return Err(ValidationError::EmptyItem);
        }
        if self.verb.is_empty() {
            return Err(ValidationError::EmptyVerb);
        }
        if self.ts < 0 {
            return Err(ValidationError::NegativeTimestamp(self.ts));
        }
        Ok(())
    }
}

/// The unique relationship between one user and one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageEdge {
    pub user_id: String,
    pub item_id: String,
    pub verb_counts: BTreeMap<String, u64>,
    pub first_ts: i64,
    pub last_ts: i64,
    pub total_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOutcome {
    Created,
    Updated,
}

/// A node lookup key; users and items are separate namespaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef<'a> {
    User(&'a str),
    Item(&'a str),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported: u64,
    pub rejected: u64,
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("event stream unreadable after {applied} applied events: {source}")]
    Io {
        applied: u64,
        #[source]
        source: io::Error,
    },
}

impl ImportError {
    pub fn applied(&self) -> u64 {
        match self {
            ImportError::Io { applied, .. } => *applied,
        }
    }
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported snapshot version {found} (expected {SNAPSHOT_VERSION})")]
    Version { found: u32 },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

pub const SNAPSHOT_FORMAT: &str = "usagegraph-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct UserIdx(pub(crate) u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct ItemIdx(pub(crate) u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct EdgeIdx(pub(crate) u32);

#[derive(Debug, Clone)]
pub(crate) struct EdgeRecord {
    pub(crate) user: UserIdx,
    pub(crate) item: ItemIdx,
    pub(crate) first_ts: i64,
    pub(crate) last_ts: i64,
    pub(crate) total: u64,
    /// (verb index, count); a handful of verbs at most, so a vec beats a map.
    verbs: Vec<(u32, u64)>,
}

#[derive(Debug, Clone, Default)]
struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("more than u32::MAX nodes");
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

/// In-memory usage graph with adjacency lists on both sides.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    users: Interner,
    items: Interner,
    verbs: Interner,
    edges: Vec<EdgeRecord>,
    edge_index: HashMap<(u32, u32), u32>,
    user_adj: Vec<Vec<EdgeIdx>>,
    item_adj: Vec<Vec<EdgeIdx>>,
    event_count: u64,
    latest_ts: Option<i64>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a graph from an event sequence, silently dropping invalid events.
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a InteractionEvent>) -> Self {
        let mut graph = Self::new();
        for event in events {
            let _ = graph.upsert_interaction(event);
        }
        graph
    }

    pub fn upsert_interaction(
        &mut self,
        event: &InteractionEvent,
    ) -> Result<EdgeOutcome, ValidationError> {
        event.validate()?;
        let user = self.intern_user(&event.user);
        let item = self.intern_item(&event.item);
        let verb = self.verbs.intern(&event.verb);
        self.event_count += 1;
        self.latest_ts = Some(self.latest_ts.map_or(event.ts, |t| t.max(event.ts)));

        match self.edge_index.get(&(user.0, item.0)) {
            Some(&idx) => {
                let edge = &mut self.edges[idx as usize];
                edge.first_ts = edge.first_ts.min(event.ts);
                edge.last_ts = edge.last_ts.max(event.ts);
                edge.total += 1;
                match edge.verbs.iter_mut().find(|(v, _)| *v == verb) {
                    Some((_, count)) => *count += 1,
                    None => edge.verbs.push((verb, 1)),
                }
                Ok(EdgeOutcome::Updated)
            }
            None => {
                self.push_edge(EdgeRecord {
                    user,
                    item,
                    first_ts: event.ts,
                    last_ts: event.ts,
                    total: 1,
                    verbs: vec![(verb, 1)],
                });
                Ok(EdgeOutcome::Created)
            }
        }
    }

    /// Apply every event; invalid ones are counted and logged, never fatal.
    pub fn batch_import<I>(&mut self, events: I) -> ImportReport
    where
        I: IntoIterator<Item = InteractionEvent>,
    {
        let mut report = ImportReport::default();
        for event in events {
            match self.upsert_interaction(&event) {
                Ok(_) => report.imported += 1,
                Err(err) => {
                    warn!(%err, user = %event.user, item = %event.item, "rejected event");
                    report.rejected += 1;
                }
            }
        }
        report
    }

    /// Import newline-delimited JSON events. Blank lines and lines starting
    /// with `#` are skipped; unparseable lines count as rejected.
    pub fn import_ndjson<R: BufRead>(&mut self, reader: R) -> Result<ImportReport, ImportError> {
        let mut report = ImportReport::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| ImportError::Io {
                applied: report.imported,
                source,
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let event: InteractionEvent = match serde_json::from_str(trimmed) {
                Ok(event) => event,
                Err(err) => {
                    warn!(line = lineno + 1, %err, "unparseable event line");
                    report.rejected += 1;
                    continue;
                }
            };
            match self.upsert_interaction(&event) {
                Ok(_) => report.imported += 1,
                Err(err) => {
                    warn!(line = lineno + 1, %err, "rejected event");
                    report.rejected += 1;
                }
            }
        }
        Ok(report)
    }

    pub fn import_ndjson_file(&mut self, path: impl AsRef<Path>) -> Result<ImportReport, ImportError> {
        let file = File::open(path).map_err(|source| ImportError::Io { applied: 0, source })?;
        self.import_ndjson(BufReader::new(file))
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn event_count(&self) -> u64 {
        self.event_count
    }

    /// Largest event timestamp ingested so far.
    pub fn latest_ts(&self) -> Option<i64> {
        self.latest_ts
    }

    pub fn contains_user(&self, user: &str) -> bool {
        self.users.get(user).is_some()
    }

    pub fn contains_item(&self, item: &str) -> bool {
        self.items.get(item).is_some()
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.users.names.iter().map(String::as_str)
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.items.names.iter().map(String::as_str)
    }

    pub fn edge(&self, user: &str, item: &str) -> Option<UsageEdge> {
        let u = self.users.get(user)?;
        let i = self.items.get(item)?;
        let idx = self.edge_index.get(&(u, i))?;
        Some(self.materialize(EdgeIdx(*idx)))
    }

    /// Edges incident to `node`.
    ///
    /// `as_of` keeps edges whose first interaction happened at or before the
    /// given time. `latest_n` (users only) keeps the `n` most recent edges
    /// after time filtering. Unknown nodes yield an empty list.
    pub fn neighbors(
        &self,
        node: NodeRef<'_>,
        as_of: Option<i64>,
        latest_n: Option<usize>,
    ) -> Vec<UsageEdge> {
        let (adj, is_user) = match node {
            NodeRef::User(id) => match self.users.get(id) {
                Some(u) => (&self.user_adj[u as usize], true),
                None => return Vec::new(),
            },
            NodeRef::Item(id) => match self.items.get(id) {
                Some(i) => (&self.item_adj[i as usize], false),
                None => return Vec::new(),
            },
        };
        let mut selected: Vec<EdgeIdx> = adj
            .iter()
            .copied()
            .filter(|&e| as_of.is_none_or(|t| self.edges[e.0 as usize].first_ts <= t))
            .collect();
        selected.sort_by(|&a, &b| self.recency_cmp(a, b));
        if is_user {
            if let Some(n) = latest_n {
                selected.truncate(n);
            }
        }
        selected.into_iter().map(|e| self.materialize(e)).collect()
    }

    /// Users within `hops` edges of any source user, ignoring time and
    /// usage-window filters. Sources that are in the graph are included.
    /// Sorted by id.
    pub fn users_near<'a>(&self, sources: impl IntoIterator<Item = &'a str>, hops: u32) -> Vec<String> {
        let mut seen = vec![false; self.users.len()];
        let mut frontier: Vec<u32> = Vec::new();
        for id in sources {
            if let Some(u) = self.users.get(id) {
                if !std::mem::replace(&mut seen[u as usize], true) {
                    frontier.push(u);
                }
            }
        }
        let mut item_seen = vec![false; self.items.len()];
        // each user-item-user step covers two hops
        for _ in 0..hops / 2 {
            let mut next = Vec::new();
            for &u in &frontier {
                for &e in &self.user_adj[u as usize] {
                    let item = self.edges[e.0 as usize].item.0;
                    if std::mem::replace(&mut item_seen[item as usize], true) {
                        continue;
                    }
                    for &f in &self.item_adj[item as usize] {
                        let v = self.edges[f.0 as usize].user.0;
                        if !std::mem::replace(&mut seen[v as usize], true) {
                            next.push(v);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        let mut out: Vec<String> = seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(u, _)| self.users.name(u as u32).to_owned())
            .collect();
        out.sort_unstable();
        out
    }

    /// Number of edges incident to each node, users first.
    pub(crate) fn user_degree(&self, user: UserIdx) -> usize {
        self.user_adj[user.0 as usize].len()
    }

    pub(crate) fn item_degree(&self, item: ItemIdx) -> usize {
        self.item_adj[item.0 as usize].len()
    }

    pub(crate) fn user_idx(&self, user: &str) -> Option<UserIdx> {
        self.users.get(user).map(UserIdx)
    }

    pub(crate) fn user_name(&self, user: UserIdx) -> &str {
        self.users.name(user.0)
    }

    pub(crate) fn item_name(&self, item: ItemIdx) -> &str {
        self.items.name(item.0)
    }

    pub(crate) fn user_edges(&self, user: UserIdx) -> &[EdgeIdx] {
        &self.user_adj[user.0 as usize]
    }

    pub(crate) fn item_edges(&self, item: ItemIdx) -> &[EdgeIdx] {
        &self.item_adj[item.0 as usize]
    }

    pub(crate) fn edge_record(&self, edge: EdgeIdx) -> &EdgeRecord {
        &self.edges[edge.0 as usize]
    }

    /// Recency order: `last_ts` descending, item id ascending, user id ascending.
    pub(crate) fn recency_cmp(&self, a: EdgeIdx, b: EdgeIdx) -> std::cmp::Ordering {
        let ea = &self.edges[a.0 as usize];
        let eb = &self.edges[b.0 as usize];
        eb.last_ts
            .cmp(&ea.last_ts)
            .then_with(|| {
                if ea.item == eb.item {
                    std::cmp::Ordering::Equal
                } else {
                    self.item_name(ea.item).cmp(self.item_name(eb.item))
                }
            })
            .then_with(|| {
                if ea.user == eb.user {
                    std::cmp::Ordering::Equal
                } else {
                    self.user_name(ea.user).cmp(self.user_name(eb.user))
                }
            })
    }

    fn intern_user(&mut self, id: &str) -> UserIdx {
        let idx = self.users.intern(id);
        if idx as usize == self.user_adj.len() {
            self.user_adj.push(Vec::new());
        }
        UserIdx(idx)
    }

    fn intern_item(&mut self, id: &str) -> ItemIdx {
        let idx = self.items.intern(id);
        if idx as usize == self.item_adj.len() {
            self.item_adj.push(Vec::new());
        }
        ItemIdx(idx)
    }

    fn push_edge(&mut self, record: EdgeRecord) {
        let idx = u32::try_from(self.edges.len()).expect("more than u32::MAX edges");
        self.edge_index.insert((record.user.0, record.item.0), idx);
        self.user_adj[record.user.0 as usize].push(EdgeIdx(idx));
        self.item_adj[record.item.0 as usize].push(EdgeIdx(idx));
        self.edges.push(record);
    }

    fn materialize(&self, edge: EdgeIdx) -> UsageEdge {
        let record = &self.edges[edge.0 as usize];
        UsageEdge {
            user_id: self.user_name(record.user).to_owned(),
            item_id: self.item_name(record.item).to_owned(),
            verb_counts: record
                .verbs
                .iter()
                .map(|&(verb, count)| (self.verbs.name(verb).to_owned(), count))
                .collect(),
            first_ts: record.first_ts,
            last_ts: record.last_ts,
            total_count: record.total,
        }
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        let mut edges: Vec<UsageEdge> = (0..self.edges.len() as u32)
            .map(|e| self.materialize(EdgeIdx(e)))
            .collect();
        edges.sort_by(|a, b| (&a.user_id, &a.item_id).cmp(&(&b.user_id, &b.item_id)));
        GraphSnapshot {
            users: self.users.names.iter().cloned().collect(),
            items: self.items.names.iter().cloned().collect(),
            edges,
            event_count: self.event_count,
            latest_ts: self.latest_ts,
        }
    }

    pub fn from_snapshot(snapshot: GraphSnapshot) -> Result<Self, SnapshotError> {
        let mut graph = Graph::new();
        for edge in &snapshot.edges {
            check_edge(edge)?;
            if !snapshot.users.contains(&edge.user_id) || !snapshot.items.contains(&edge.item_id) {
                return Err(SnapshotError::Corrupt(format!(
                    "edge ({}, {}) references a missing node",
                    edge.user_id, edge.item_id
                )));
            }
            let user = graph.intern_user(&edge.user_id);
            let item = graph.intern_item(&edge.item_id);
            if graph.edge_index.contains_key(&(user.0, item.0)) {
                return Err(SnapshotError::Corrupt(format!(
                    "duplicate edge ({}, {})",
                    edge.user_id, edge.item_id
                )));
            }
            let verbs = edge
                .verb_counts
                .iter()
                .map(|(verb, &count)| (graph.verbs.intern(verb), count))
                .collect();
            graph.push_edge(EdgeRecord {
                user,
                item,
                first_ts: edge.first_ts,
                last_ts: edge.last_ts,
                total: edge.total_count,
                verbs,
            });
        }
        if graph.users.len() != snapshot.users.len() || graph.items.len() != snapshot.items.len() {
            return Err(SnapshotError::Corrupt("node without edges".into()));
        }
        graph.event_count = snapshot.event_count;
        graph.latest_ts = snapshot.latest_ts;
        Ok(graph)
    }

    /// Write a versioned line-JSON snapshot: a header line, one line per
    /// edge, and a trailer line that guards against truncation.
    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<(), SnapshotError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            let snapshot = self.snapshot();
            let header = SnapshotHeader {
                format: SNAPSHOT_FORMAT.to_owned(),
                version: SNAPSHOT_VERSION,
                users: snapshot.users.len() as u64,
                items: snapshot.items.len() as u64,
                edges: snapshot.edges.len() as u64,
                event_count: snapshot.event_count,
                latest_ts: snapshot.latest_ts,
            };
            serde_json::to_writer(&mut out, &header).map_err(io::Error::from)?;
            out.write_all(b"\n")?;
            for edge in &snapshot.edges {
                serde_json::to_writer(&mut out, edge).map_err(io::Error::from)?;
                out.write_all(b"\n")?;
            }
            serde_json::to_writer(&mut out, &SnapshotTrailer { end: header.edges })
                .map_err(io::Error::from)?;
            out.write_all(b"\n")?;
            out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Self, SnapshotError> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| SnapshotError::Corrupt("empty file".into()))??;
        let header: SnapshotHeader = serde_json::from_str(&header_line)
            .map_err(|e| SnapshotError::Corrupt(format!("header: {e}")))?;
        if header.format != SNAPSHOT_FORMAT {
            return Err(SnapshotError::Corrupt(format!("unknown format {:?}", header.format)));
        }
        if header.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version { found: header.version });
        }
        let mut edges = Vec::with_capacity(header.edges.min(1 << 20) as usize);
        for _ in 0..header.edges {
            let line = lines
                .next()
                .ok_or_else(|| SnapshotError::Corrupt("truncated edge list".into()))??;
            let edge: UsageEdge = serde_json::from_str(&line)
                .map_err(|e| SnapshotError::Corrupt(format!("edge {}: {e}", edges.len())))?;
            edges.push(edge);
        }
        let trailer_line = lines
            .next()
            .ok_or_else(|| SnapshotError::Corrupt("missing trailer".into()))??;
        let trailer: SnapshotTrailer = serde_json::from_str(&trailer_line)
            .map_err(|e| SnapshotError::Corrupt(format!("trailer: {e}")))?;
        if trailer.end != header.edges {
            return Err(SnapshotError::Corrupt("trailer does not match header".into()));
        }
        if lines.next().is_some() {
            return Err(SnapshotError::Corrupt("trailing data after trailer".into()));
        }
        let users: BTreeSet<String> = edges.iter().map(|e| e.user_id.clone()).collect();
        let items: BTreeSet<String> = edges.iter().map(|e| e.item_id.clone()).collect();
        if users.len() as u64 != header.users || items.len() as u64 != header.items {
            return Err(SnapshotError::Corrupt("node counts do not match header".into()));
        }
        Graph::from_snapshot(GraphSnapshot {
            users,
            items,
            edges,
            event_count: header.event_count,
            latest_ts: header.latest_ts,
        })
    }
}

fn check_edge(edge: &UsageEdge) -> Result<(), SnapshotError> {
    let sum: u64 = edge.verb_counts.values().sum();
    if edge.user_id.is_empty()
        || edge.item_id.is_empty()
        || edge.first_ts > edge.last_ts
        || edge.total_count == 0
        || sum != edge.total_count
        || edge.verb_counts.values().any(|&c| c == 0)
    {
        return Err(SnapshotError::Corrupt(format!(
            "invalid edge ({}, {})",
            edge.user_id, edge.item_id
        )));
    }
    Ok(())
}

/// Owned, order-independent view of a whole graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSnapshot {
    pub users: BTreeSet<String>,
    pub items: BTreeSet<String>,
    /// Sorted by (user_id, item_id).
    pub edges: Vec<UsageEdge>,
    pub event_count: u64,
    pub latest_ts: Option<i64>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    format: String,
    version: u32,
    users: u64,
    items: u64,
    edges: u64,
    event_count: u64,
    latest_ts: Option<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotTrailer {
    end: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(ts: i64, user: &str, item: &str, verb: &str) -> InteractionEvent {
        InteractionEvent::new(ts, user, item, verb)
    }

    #[test]
    fn users_near_counts_hops() {
        // chain u1 - a - u2 - b - u3
        let g = Graph::from_events(&[ev(1, "u1", "a", "view"), ev(2, "u2", "a", "view"), ev(3, "u2", "b", "view"), ev(4, "u3", "b", "view")]);
        assert_eq!(g.users_near(["u1"], 0), vec!["u1"]);
        assert_eq!(g.users_near(["u1"], 3), vec!["u1", "u2"]);
        assert_eq!(g.users_near(["u1"], 4), vec!["u1", "u2", "u3"]);
        assert_eq!(g.users_near(["u3", "ghost"], 2), vec!["u2", "u3"]);
        assert!(g.users_near(["ghost"], 8).is_empty());
    }

    #[test]
    fn first_insert_creates_edge() {
        let mut g = Graph::new();
        assert_eq!(g.upsert_interaction(&ev(100, "u1", "d1", "view")), Ok(EdgeOutcome::Created));
        let edge = g.edge("u1", "d1").unwrap();
        assert_eq!(edge.total_count, 1);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn repeated_event_updates_single_edge() {
        let mut g = Graph::new();
        g.upsert_interaction(&ev(100, "u1", "d1", "view")).unwrap();
        assert_eq!(g.upsert_interaction(&ev(100, "u1", "d1", "view")), Ok(EdgeOutcome::Updated));
        let edge = g.edge("u1", "d1").unwrap();
        assert_eq!(edge.total_count, 2);
        assert_eq!((edge.first_ts, edge.last_ts), (100, 100));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn earlier_event_with_new_verb_widens_time_range() {
        let mut g = Graph::new();
        g.upsert_interaction(&ev(100, "u1", "d1", "view")).unwrap();
        g.upsert_interaction(&ev(100, "u1", "d1", "view")).unwrap();
        let out = g.upsert_interaction(&ev(50, "u1", "d1", "download")).unwrap();
        assert_eq!(out, EdgeOutcome::Updated);
        let edge = g.edge("u1", "d1").unwrap();
        let expected: BTreeMap<String, u64> =
            [("view".to_owned(), 2), ("download".to_owned(), 1)].into_iter().collect();
        assert_eq!(edge.verb_counts, expected);
        assert_eq!((edge.first_ts, edge.last_ts), (50, 100));
        assert_eq!(edge.total_count, 3);
    }

    #[test]
    fn malformed_events_leave_store_unchanged() {
        let mut g = Graph::new();
        g.upsert_interaction(&ev(1, "u", "i", "view")).unwrap();
        assert_eq!(g.upsert_interaction(&ev(1, "", "i", "view")), Err(ValidationError::EmptyUser));
        assert_eq!(g.upsert_interaction(&ev(1, "u", "", "view")), Err(ValidationError::EmptyItem));
        assert_eq!(g.upsert_interaction(&ev(1, "u", "i", "")), Err(ValidationError::EmptyVerb));
        assert_eq!(
            g.upsert_interaction(&ev(-5, "u2", "i", "view")),
            Err(ValidationError::NegativeTimestamp(-5))
        );
        assert_eq!(g.event_count(), 1);
        assert_eq!(g.user_count(), 1);
        assert!(!g.contains_user("u2"));
    }

    #[test]
    fn batch_import_counts_rejections() {
        let mut g = Graph::new();
        let report = g.batch_import(vec![
            ev(1, "a", "x", "view"),
            ev(2, "b", "x", "view"),
            ev(3, "c", "y", "view"),
        ]);
        assert_eq!(report, ImportReport { imported: 3, rejected: 0 });

        let mut g = Graph::new();
        let report = g.batch_import(vec![
            ev(1, "a", "x", "view"),
            ev(2, "", "x", "view"),
            ev(3, "c", "y", "view"),
        ]);
        assert_eq!(report, ImportReport { imported: 2, rejected: 1 });
    }

    #[test]
    fn ndjson_skips_comments_and_counts_garbage() {
        let input = "# header\n\
            {\"ts\":1,\"user\":\"a\",\"item\":\"x\",\"verb\":\"view\"}\n\
            \n\
            not json\n\
            {\"ts\":2,\"user\":\"b\",\"item\":\"x\",\"verb\":\"download\"}\n";
        let mut g = Graph::new();
        let report = g.import_ndjson(input.as_bytes()).unwrap();
        assert_eq!(report, ImportReport { imported: 2, rejected: 1 });
        assert_eq!(g.item_count(), 1);
    }

    struct FailingReader {
        served: bool,
    }

    impl io::Read for FailingReader {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            if self.served {
                return Err(io::Error::other("disk gone"));
            }
            self.served = true;
            let line = b"{\"ts\":1,\"user\":\"a\",\"item\":\"x\",\"verb\":\"view\"}\n";
            buf[..line.len()].copy_from_slice(line);
            Ok(line.len())
        }
    }

    #[test]
    fn unreadable_stream_reports_applied_count() {
        let mut g = Graph::new();
        let err = g
            .import_ndjson(BufReader::new(FailingReader { served: false }))
            .unwrap_err();
        assert_eq!(err.applied(), 1);
        assert_eq!(g.event_count(), 1);
    }

    fn three_edge_user() -> Graph {
        let mut g = Graph::new();
        g.upsert_interaction(&ev(10, "u", "a", "view")).unwrap();
        g.upsert_interaction(&ev(20, "u", "b", "view")).unwrap();
        g.upsert_interaction(&ev(30, "u", "c", "view")).unwrap();
        g
    }

    #[test]
    fn latest_n_keeps_most_recent() {
        let g = three_edge_user();
        let got: Vec<i64> = g
            .neighbors(NodeRef::User("u"), None, Some(2))
            .iter()
            .map(|e| e.last_ts)
            .collect();
        assert_eq!(got, vec![30, 20]);
    }

    #[test]
    fn as_of_filters_on_first_interaction() {
        let g = three_edge_user();
        let got: Vec<i64> = g
            .neighbors(NodeRef::User("u"), Some(15), None)
            .iter()
            .map(|e| e.last_ts)
            .collect();
        assert_eq!(got, vec![10]);
    }

    #[test]
    fn unknown_node_has_no_neighbors() {
        let g = three_edge_user();
        assert!(g.neighbors(NodeRef::User("ghost"), None, None).is_empty());
        assert!(g.neighbors(NodeRef::Item("ghost"), None, None).is_empty());
    }

    #[test]
    fn ties_break_on_item_id() {
        let mut g = Graph::new();
        g.upsert_interaction(&ev(5, "u", "z", "view")).unwrap();
        g.upsert_interaction(&ev(5, "u", "b", "view")).unwrap();
        g.upsert_interaction(&ev(5, "u", "m", "view")).unwrap();
        let items: Vec<String> = g
            .neighbors(NodeRef::User("u"), None, Some(2))
            .into_iter()
            .map(|e| e.item_id)
            .collect();
        assert_eq!(items, vec!["b", "m"]);
    }

    #[test]
    fn user_and_item_namespaces_are_disjoint() {
        let mut g = Graph::new();
        g.upsert_interaction(&ev(1, "x", "x", "view")).unwrap();
        assert_eq!(g.user_count(), 1);
        assert_eq!(g.item_count(), 1);
        assert_eq!(g.neighbors(NodeRef::Item("x"), None, None)[0].user_id, "x");
    }

    #[test]
    fn latest_n_ignored_for_items() {
        let mut g = Graph::new();
        for (ts, user) in [(1, "a"), (2, "b"), (3, "c")] {
            g.upsert_interaction(&ev(ts, user, "i", "view")).unwrap();
        }
        assert_eq!(g.neighbors(NodeRef::Item("i"), None, Some(1)).len(), 3);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.snap");

        let empty = Graph::new();
        empty.save_snapshot(&path).unwrap();
        let loaded = Graph::load_snapshot(&path).unwrap();
        assert_eq!(loaded.snapshot(), empty.snapshot());

        let mut g = three_edge_user();
        g.upsert_interaction(&ev(40, "v", "a", "download")).unwrap();
        g.save_snapshot(&path).unwrap();
        let loaded = Graph::load_snapshot(&path).unwrap();
        assert_eq!(loaded.snapshot(), g.snapshot());
        for user in ["u", "v"] {
            assert_eq!(
                loaded.neighbors(NodeRef::User(user), None, None),
                g.neighbors(NodeRef::User(user), None, None)
            );
        }
        for item in ["a", "b", "c"] {
            assert_eq!(
                loaded.neighbors(NodeRef::Item(item), None, None),
                g.neighbors(NodeRef::Item(item), None, None)
            );
        }
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.snap");
        three_edge_user().save_snapshot(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(Graph::load_snapshot(&path), Err(SnapshotError::Corrupt(_))));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.snap");
        three_edge_user().save_snapshot(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replacen("\"version\":1", "\"version\":7", 1)).unwrap();
        assert!(matches!(
            Graph::load_snapshot(&path),
            Err(SnapshotError::Version { found: 7 })
        ));
    }
}
