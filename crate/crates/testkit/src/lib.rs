//! Slow, obviously-correct reference implementations used as test oracles.
//!
//! Nothing here shares code with the traversal or scoring paths in
//! `usagegraph-core`; the oracles work directly on raw event lists.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usagegraph_core::InteractionEvent;

/// Collapsed edge as seen by the oracle: earliest and latest interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSpan {
    pub first_ts: i64,
    pub last_ts: i64,
}

/// Collapse raw events to one span per (user, item) pair.
pub fn pair_spans(events: &[InteractionEvent]) -> BTreeMap<(String, String), PairSpan> {
    let mut spans: BTreeMap<(String, String), PairSpan> = BTreeMap::new();
    for e in events {
        spans
            .entry((e.user.clone(), e.item.clone()))
            .and_modify(|s| {
                s.first_ts = s.first_ts.min(e.ts);
                s.last_ts = s.last_ts.max(e.ts);
            })
            .or_insert(PairSpan {
                first_ts: e.ts,
                last_ts: e.ts,
            });
    }
    spans
}

/// Edges that survive the time bound and the per-user latest-N window.
pub fn filtered_edges(
    events: &[InteractionEvent],
    as_of: Option<i64>,
    max_usages: Option<usize>,
) -> BTreeSet<(String, String)> {
    let mut per_user: BTreeMap<String, Vec<(i64, String)>> = BTreeMap::new();
    for ((user, item), span) in pair_spans(events) {
        if as_of.is_some_and(|t| span.first_ts > t) {
            continue;
        }
        per_user.entry(user).or_default().push((span.last_ts, item));
    }
    let mut out = BTreeSet::new();
    for (user, mut items) in per_user {
        items.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let keep = max_usages.unwrap_or(usize::MAX);
        for (_, item) in items.into_iter().take(keep) {
            out.insert((user.clone(), item));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    User(String),
    Item(String),
}

/// Unweighted shortest-path lengths from `root` by repeated relaxation over
/// the edge list until nothing changes.
pub fn shortest_paths(edges: &BTreeSet<(String, String)>, root: &str) -> BTreeMap<Vertex, u32> {
    // (is_item, id) keys borrow from `edges`
    let mut dist: BTreeMap<(bool, &str), u32> = BTreeMap::new();
    if edges.iter().any(|(u, _)| u == root) {
        dist.insert((false, root), 0);
    }
    let mut changed = !dist.is_empty();
    while changed {
        changed = false;
        for (u, i) in edges {
            let du = dist.get(&(false, u.as_str())).copied();
            let di = dist.get(&(true, i.as_str())).copied();
            if let Some(d) = du {
                if di.is_none_or(|x| x > d + 1) {
                    dist.insert((true, i), d + 1);
                    changed = true;
                }
            }
            if let Some(d) = di {
                if du.is_none_or(|x| x > d + 1) {
                    dist.insert((false, u), d + 1);
                    changed = true;
                }
            }
        }
    }
    dist.into_iter()
        .map(|((is_item, id), d)| {
            let v = if is_item { Vertex::Item(id.to_owned()) } else { Vertex::User(id.to_owned()) };
            (v, d)
        })
        .collect()
}

/// Per reachable item within `depth`: the sorted distances of every user
/// within `depth` that is linked to it in the filtered edge set.
pub fn expected_inputs(
    events: &[InteractionEvent],
    root: &str,
    depth: u32,
    as_of: Option<i64>,
    max_usages: Option<usize>,
) -> BTreeMap<String, Vec<u32>> {
    let edges = filtered_edges(events, as_of, max_usages);
    let dist = shortest_paths(&edges, root);
    inputs_within(&edges, &dist, depth)
}

/// [`expected_inputs`] from precomputed edges and path lengths.
pub fn inputs_within(
    edges: &BTreeSet<(String, String)>,
    dist: &BTreeMap<Vertex, u32>,
    depth: u32,
) -> BTreeMap<String, Vec<u32>> {
    let mut out: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for (vertex, &d) in dist {
        if let Vertex::Item(item) = vertex {
            if d <= depth {
                out.insert(item.clone(), Vec::new());
            }
        }
    }
    for (user, item) in edges {
        let Some(list) = out.get_mut(item) else { continue };
        if let Some(&d) = dist.get(&Vertex::User(user.clone())) {
            if d <= depth {
                list.push(d);
            }
        }
    }
    for list in out.values_mut() {
        list.sort_unstable();
    }
    out
}

/// e^n / (Σd + 1), evaluated directly.
pub fn direct_score(n: f64, distance_sum: u64) -> f64 {
    n.exp() / (distance_sum as f64 + 1.0)
}

/// Random bipartite interaction log with at most `max_nodes` distinct ids.
///
/// Ids are drawn from small pools so users share items; timestamps repeat
/// now and then to exercise tie handling.
pub fn random_events(seed: u64, max_nodes: usize, max_events: usize) -> Vec<InteractionEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.random_range(1..=(max_nodes / 2).max(1));
    let items = rng.random_range(1..=(max_nodes - users).max(1));
    let count = rng.random_range(1..=max_events.max(1));
    let mut ts = 0i64;
    (0..count)
        .map(|_| {
            if rng.random_bool(0.8) {
                ts += rng.random_range(1..5);
            }
            let verb = if rng.random_bool(0.5) { "view" } else { "download" };
            InteractionEvent::new(
                ts,
                format!("u{}", rng.random_range(0..users)),
                format!("i{}", rng.random_range(0..items)),
                verb,
            )
        })
        .collect()
}

/// The eleven rows of the prototype score table: label, per-user distances
/// from the formula column, and the printed score.
pub const PROTOTYPE_TABLE: [(&str, &[u32], f64); 11] = [
    ("Item 1", &[0, 2, 2], 4.01),
    ("Item 2", &[0, 2, 2], 4.01),
    ("Item 3", &[2, 2, 3], 2.51),
    ("Item 4", &[2, 2], 1.47),
    ("Item 5", &[4, 2], 1.04),
    ("Item 6", &[4, 2], 1.04),
    ("Item 7", &[4, 6], 0.67),
    ("Item 8", &[4], 0.54),
    ("Item 9", &[6, 8], 0.18),
    ("Item 10", &[6], 0.38),
    ("Item 11", &[9], 0.27),
];
