//! Breadth-first proximity scoring.
//!
//! An item reached from the root user is scored from the users discovered
//! within the depth bound who used it: with `n` such users whose BFS
//! distances sum to `D`, the score is `e^n / (D + 1)`. Scores are carried in
//! log space (`n − ln(D + 1)`) since `e^n` overflows long before `n` reaches
//! realistic popularity counts; the ordering is identical.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::graph::{EdgeIdx, Graph, ItemIdx, UserIdx};

pub const MAX_DEPTH: u32 = 8;

/// How the discovered-user count of an item enters the exponent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `n`
    #[default]
    Constant,
    /// `ln(1 + n)`
    Log,
    /// `n / n_max`
    Normalized,
    /// `ln(1 + n) / ln(1 + n_max)`
    LogNormalized,
}

impl Weighting {
    pub const ALL: [Weighting; 4] = [
        Weighting::Constant,
        Weighting::Log,
        Weighting::Normalized,
        Weighting::LogNormalized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Constant => "constant",
            Weighting::Log => "log",
            Weighting::Normalized => "normalized",
            Weighting::LogNormalized => "log_normalized",
        }
    }

    /// The exponent used in place of the raw user count. `n_max` is the
    /// largest user count seen in the same traversal.
    pub fn effective_count(self, n: usize, n_max: usize) -> f64 {
        let n = n as f64;
        let n_max = n_max.max(1) as f64;
        match self {
            Weighting::Constant => n,
            Weighting::Log => n.ln_1p(),
            Weighting::Normalized => n / n_max,
            Weighting::LogNormalized => n.ln_1p() / n_max.ln_1p(),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weighting {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(Weighting::Constant),
            "log" => Ok(Weighting::Log),
            "normalized" => Ok(Weighting::Normalized),
            "log_normalized" | "log-normalized" => Ok(Weighting::LogNormalized),
            other => Err(ValidationError::UnknownWeighting(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    /// Maximum number of edges followed from the root user, 1..=8.
    pub depth: u32,
    /// Per-user window of most recent usages; `None` keeps all of them.
    pub max_usages: Option<usize>,
    pub weighting: Weighting,
    /// Only edges whose first interaction is at or before this time exist.
    pub as_of: Option<i64>,
    pub max_results: Option<usize>,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            depth: 3,
            max_usages: None,
            weighting: Weighting::Constant,
            as_of: None,
            max_results: None,
        }
    }
}

impl ScoringParams {
    pub fn with_depth(depth: u32) -> Self {
        Self {
            depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return Err(ValidationError::DepthOutOfRange(self.depth));
        }
        if self.max_usages == Some(0) {
            return Err(ValidationError::ZeroUsageWindow);
        }
        Ok(())
    }
}

/// What the traversal learned about one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreInputs {
    pub item_id: String,
    /// Discovered users adjacent to the item.
    pub user_count: usize,
    pub distance_sum: u64,
    /// BFS distance of each of those users, ascending.
    pub distances: Vec<u32>,
}

impl ScoreInputs {
    pub fn from_distances(item_id: impl Into<String>, mut distances: Vec<u32>) -> Self {
        distances.sort_unstable();
        Self {
            item_id: item_id.into(),
            user_count: distances.len(),
            distance_sum: distances.iter().map(|&d| u64::from(d)).sum(),
            distances,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item_id: String,
    pub log_score: f64,
    /// `exp(log_score)`, absent when it does not fit in an f64.
    pub raw_score: Option<f64>,
}

/// Ranked output for one user, score descending then item id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user_id: String,
    /// The `as_of` bound when given, otherwise the newest event in the graph.
    pub generated_at: i64,
    pub params: ScoringParams,
    pub items: Vec<ScoredItem>,
}

pub fn item_score(inputs: &ScoreInputs, weighting: Weighting, n_max: usize) -> ScoredItem {
    let n_eff = weighting.effective_count(inputs.user_count, n_max);
    let log_score = n_eff - (inputs.distance_sum as f64).ln_1p();
    let raw = log_score.exp();
    ScoredItem {
        item_id: inputs.item_id.clone(),
        log_score,
        raw_score: (raw.is_finite() && raw > 0.0).then_some(raw),
    }
}

fn rank_cmp(a: &ScoredItem, b: &ScoredItem) -> Ordering {
    b.log_score
        .total_cmp(&a.log_score)
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// Score every input and return them in ranking order.
pub fn score_and_rank<'a>(
    inputs: impl IntoIterator<Item = &'a ScoreInputs>,
    weighting: Weighting,
    max_results: Option<usize>,
) -> Vec<ScoredItem> {
    let inputs: Vec<&ScoreInputs> = inputs.into_iter().collect();
    let n_max = inputs.iter().map(|i| i.user_count).max().unwrap_or(1);
    let mut items: Vec<ScoredItem> = inputs
        .iter()
        .map(|i| item_score(i, weighting, n_max))
        .collect();
    items.sort_by(rank_cmp);
    if let Some(limit) = max_results {
        items.truncate(limit);
    }
    items
}

/// Edge set after the time bound and the per-user recency window.
struct EdgeView<'g> {
    graph: &'g Graph,
    as_of: Option<i64>,
    max_usages: Option<usize>,
    /// Last admitted edge in recency order, per user; `None` admits all.
    cutoffs: HashMap<UserIdx, Option<EdgeIdx>>,
}

impl<'g> EdgeView<'g> {
    fn new(graph: &'g Graph, params: &ScoringParams) -> Self {
        Self {
            graph,
            as_of: params.as_of,
            max_usages: params.max_usages,
            cutoffs: HashMap::new(),
        }
    }

    fn in_time(&self, edge: EdgeIdx) -> bool {
        self.as_of
            .is_none_or(|t| self.graph.edge_record(edge).first_ts <= t)
    }

    fn cutoff(&mut self, user: UserIdx) -> Option<EdgeIdx> {
        let limit = self.max_usages?;
        let graph = self.graph;
        let as_of = self.as_of;
        *self.cutoffs.entry(user).or_insert_with(|| {
            let mut live: Vec<EdgeIdx> = graph
                .user_edges(user)
                .iter()
                .copied()
                .filter(|&e| as_of.is_none_or(|t| graph.edge_record(e).first_ts <= t))
                .collect();
            if live.len() <= limit {
                return None;
            }
            let (_, nth, _) = live.select_nth_unstable_by(limit - 1, |&a, &b| graph.recency_cmp(a, b));
            Some(*nth)
        })
    }

    fn admits(&mut self, edge: EdgeIdx) -> bool {
        if !self.in_time(edge) {
            return false;
        }
        let user = self.graph.edge_record(edge).user;
        match self.cutoff(user) {
            None => true,
            Some(last) => self.graph.recency_cmp(edge, last) != Ordering::Greater,
        }
    }
}

#[derive(Clone, Copy)]
enum Node {
    User(UserIdx),
    Item(ItemIdx),
}

/// Breadth-first search from `user`, collecting for every discovered item
/// the distances of the discovered users adjacent to it.
///
/// Nodes further than `params.depth` edges away are never discovered. The
/// root counts with distance 0. Unknown users yield an empty map.
pub fn traverse(graph: &Graph, user: &str, params: &ScoringParams) -> BTreeMap<String, ScoreInputs> {
    let Some(root) = graph.user_idx(user) else {
        return BTreeMap::new();
    };
    let mut view = EdgeView::new(graph, params);
    let mut user_dist: HashMap<UserIdx, u32> = HashMap::new();
    let mut item_dist: HashMap<ItemIdx, u32> = HashMap::new();
    let mut discovered_items = Vec::new();
    let mut queue = VecDeque::new();

    user_dist.insert(root, 0);
    queue.push_back((Node::User(root), 0u32));
    while let Some((node, dist)) = queue.pop_front() {
        if dist >= params.depth {
            continue;
        }
        match node {
            Node::User(u) => {
                for &edge in graph.user_edges(u) {
                    let item = graph.edge_record(edge).item;
                    if item_dist.contains_key(&item) || !view.admits(edge) {
                        continue;
                    }
                    item_dist.insert(item, dist + 1);
                    discovered_items.push(item);
                    queue.push_back((Node::Item(item), dist + 1));
                }
            }
            Node::Item(i) => {
                for &edge in graph.item_edges(i) {
                    let next = graph.edge_record(edge).user;
                    if user_dist.contains_key(&next) || !view.admits(edge) {
                        continue;
                    }
                    user_dist.insert(next, dist + 1);
                    queue.push_back((Node::User(next), dist + 1));
                }
            }
        }
    }

    let mut out = BTreeMap::new();
    for item in discovered_items {
        let mut distances = Vec::new();
        for &edge in graph.item_edges(item) {
            let record = graph.edge_record(edge);
            if let Some(&d) = user_dist.get(&record.user) {
                if view.admits(edge) {
                    distances.push(d);
                }
            }
        }
        let name = graph.item_name(item).to_owned();
        out.insert(name.clone(), ScoreInputs::from_distances(name, distances));
    }
    out
}

/// Traverse, score and rank. Items the user already used are included.
pub fn recommend(graph: &Graph, user: &str, params: &ScoringParams) -> RecommendationList {
    let inputs = traverse(graph, user, params);
    RecommendationList {
        user_id: user.to_owned(),
        generated_at: params.as_of.or(graph.latest_ts()).unwrap_or(0),
        params: params.clone(),
        items: score_and_rank(inputs.values(), params.weighting, params.max_results),
    }
}
