use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::EvalCase;
use super::EvalError;
use crate::error::ValidationError;
use crate::graph::Graph;
use crate::rerank::{rerank, BaseScoring, OriginalResult, RerankRequest};
use crate::scoring::{recommend, ScoringParams};

/// One search with the item the user went on to open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchLogEntry {
    pub ts: i64,
    pub user: String,
    pub query: String,
    pub shown: Vec<String>,
    pub clicked: String,
    /// Ranking method label, e.g. "latest_first" or "personalized".
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// 1-based index of `clicked` within `shown`.
    pub click_position: usize,
}

impl SearchLogEntry {
    pub fn new(
        ts: i64,
        user: impl Into<String>,
        query: impl Into<String>,
        shown: Vec<String>,
        clicked: impl Into<String>,
        method: impl Into<String>,
        alpha: Option<f64>,
    ) -> Result<Self, ValidationError> {
        let clicked = clicked.into();
        let position = shown
            .iter()
            .position(|s| *s == clicked)
            .ok_or_else(|| ValidationError::ClickedNotShown(clicked.clone()))?;
        Ok(Self {
            ts,
            user: user.into(),
            query: query.into(),
            shown,
            clicked,
            method: method.into(),
            alpha,
            click_position: position + 1,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClickGrouping {
    #[default]
    Method,
    Alpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickPositionRow {
    pub group: String,
    pub count: u64,
    pub mean_click_position: f64,
}

impl ClickPositionRow {
    pub fn csv(rows: &[ClickPositionRow]) -> String {
        let mut out = String::from("group,count,mean_click_position\n");
        for row in rows {
            out.push_str(&format!("{},{},{:.6}\n", row.group, row.count, row.mean_click_position));
        }
        out
    }
}

/// Mean click position per group, groups in ascending order. Entries
/// without an alpha are skipped when grouping by alpha.
pub fn click_position_report(logs: &[SearchLogEntry], grouping: ClickGrouping) -> Vec<ClickPositionRow> {
    let mut groups: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for entry in logs {
        let key = match grouping {
            ClickGrouping::Method => entry.method.clone(),
            ClickGrouping::Alpha => match entry.alpha {
                Some(alpha) => alpha.to_string(),
                None => continue,
            },
        };
        let slot = groups.entry(key).or_default();
        slot.0 += 1;
        slot.1 += entry.click_position as u64;
    }
    groups
        .into_iter()
        .map(|(group, (count, sum))| ClickPositionRow {
            group,
            count,
            mean_click_position: sum as f64 / count as f64,
        })
        .collect()
}

/// Parse a search log (one JSON entry per line). Positions are recomputed
/// from `shown`; entries whose click is not shown are rejected.
pub fn read_search_log<R: BufRead>(reader: R) -> Result<Vec<SearchLogEntry>, EvalError> {
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let raw: SearchLogEntry = serde_json::from_str(trimmed)
            .map_err(|e| ValidationError::Invalid(format!("search log line: {e}")))?;
        entries.push(SearchLogEntry::new(
            raw.ts, raw.user, raw.query, raw.shown, raw.clicked, raw.method, raw.alpha,
        )?);
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickSimulation {
    /// Length of each simulated result list, clicked item included.
    pub list_len: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
}

/// Replay held-out clicks against simulated latest-first result lists.
///
/// For every case and every held-out item, a result list is formed from
/// that item plus random distractors (items the user did not go on to use),
/// ordered newest publication first. The list is re-ranked for the user
/// under each importance factor and the clicked item's 1-based position is
/// recorded. Returns the mean position per entry of `sim.alphas`.
pub fn simulate_click_positions(
    graph: &Graph,
    cases: &[EvalCase],
    params: &ScoringParams,
    publication: &HashMap<String, i64>,
    sim: &ClickSimulation,
) -> Result<Vec<f64>, EvalError> {
    if sim.list_len == 0 {
        return Err(EvalError::Empty("list_len"));
    }
    let universe: BTreeSet<&str> = publication.keys().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut sums = vec![0u64; sim.alphas.len()];
    let mut clicks = 0u64;

    for case in cases {
        let list = recommend(
            graph,
            &case.user,
            &ScoringParams {
                as_of: case.as_of,
                ..params.clone()
            },
        );
        let pool: Vec<&str> = universe
            .iter()
            .copied()
            .filter(|i| !case.heldout.contains(*i))
            .collect();
        for clicked in &case.heldout {
            let take = (sim.list_len - 1).min(pool.len());
            let mut shown: Vec<&str> = index::sample(&mut rng, pool.len(), take)
                .into_iter()
                .map(|i| pool[i])
                .collect();
            shown.push(clicked);
            shown.sort_by(|a, b| {
                let pa = publication.get(*a).copied().unwrap_or(i64::MIN);
                let pb = publication.get(*b).copied().unwrap_or(i64::MIN);
                pb.cmp(&pa).then_with(|| a.cmp(b))
            });
            let original = OriginalResult::from_items(shown.iter().copied());
            clicks += 1;
            for (slot, &alpha) in sums.iter_mut().zip(&sim.alphas) {
                let out = rerank(&RerankRequest {
                    user_id: case.user.clone(),
                    original: original.clone(),
                    alpha,
                    recommendations: list.items.clone(),
                    base: BaseScoring::Position,
                })?;
                let pos = out
                    .items
                    .iter()
                    .position(|i| i == clicked)
                    .expect("rerank preserves items");
                *slot += pos as u64 + 1;
            }
        }
    }
    if clicks == 0 {
        return Err(EvalError::Empty("click simulation cases"));
    }
    Ok(sums.into_iter().map(|s| s as f64 / clicks as f64).collect())
}
