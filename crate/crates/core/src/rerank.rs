//! Re-ordering of an external engine's result list.
//!
//! The output is always a permutation of the input list. Each item gets a
//! base score from the original list and a recommendation score, blended as
//! `(1 − α)·base + α·rec` and stably sorted, so ties keep the engine's order.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::scoring::ScoredItem;

/// The external engine's ranking, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OriginalResult {
    pub items: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine_scores: Option<Vec<f64>>,
}

impl OriginalResult {
    pub fn from_items<S: Into<String>>(items: impl IntoIterator<Item = S>) -> Self {
        Self {
            items: items.into_iter().map(Into::into).collect(),
            engine_scores: None,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.items.is_empty() {
            return Err(ValidationError::EmptyResultList);
        }
        let mut seen = HashSet::with_capacity(self.items.len());
        for item in &self.items {
            if !seen.insert(item.as_str()) {
                return Err(ValidationError::DuplicateItem(item.clone()));
            }
        }
        if let Some(scores) = &self.engine_scores {
            if scores.len() != self.items.len() {
                return Err(ValidationError::EngineScoreLength {
                    expected: self.items.len(),
                    got: scores.len(),
                });
            }
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(ValidationError::NonFiniteScore);
            }
            // the list is the engine's ranking, so its scores cannot rise
            if let Some(i) = scores.windows(2).position(|w| w[1] > w[0]) {
                return Err(ValidationError::EngineScoresUnranked(i + 1));
            }
        }
        Ok(())
    }
}

/// Where base scores come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseScoring {
    /// Engine scores when supplied, positions otherwise.
    #[default]
    Auto,
    Position,
    Engine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRequest {
    pub user_id: String,
    pub original: OriginalResult,
    /// Importance factor: 0 ignores recommendations, 1 lets them decide.
    pub alpha: f64,
    pub recommendations: Vec<ScoredItem>,
    #[serde(default)]
    pub base: BaseScoring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankResult {
    pub items: Vec<String>,
    /// Aligned with `items`.
    pub final_scores: Vec<f64>,
}

pub fn validate_alpha(alpha: f64) -> Result<(), ValidationError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(ValidationError::AlphaOutOfRange(alpha))
    }
}

/// Linear position scores: first item 1.0, last item 0.0.
pub fn normalize_positions(original: &OriginalResult) -> Result<Vec<f64>, ValidationError> {
    let n = original.items.len();
    match n {
        0 => Err(ValidationError::EmptyResultList),
        1 => Ok(vec![1.0]),
        _ => {
            let last = (n - 1) as f64;
            Ok((0..n).map(|i| (n - 1 - i) as f64 / last).collect())
        }
    }
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![1.0; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

/// Min-max normalization of `exp(log_score)` over the items present in the
/// original list, evaluated without leaving log space. Absent items get 0.
fn recommendation_components(items: &[String], recommendations: &[ScoredItem]) -> Vec<f64> {
    let mut by_item: HashMap<&str, f64> = HashMap::with_capacity(recommendations.len());
    for rec in recommendations {
        by_item.entry(rec.item_id.as_str()).or_insert(rec.log_score);
    }
    let present: Vec<Option<f64>> = items.iter().map(|i| by_item.get(i.as_str()).copied()).collect();
    let (lo, hi) = present
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if lo > hi {
        return vec![0.0; items.len()];
    }
    // exp(l) - exp(lo) over exp(hi) - exp(lo), rescaled by exp(-hi)
    let offset = lo - hi;
    let denom = -offset.exp_m1();
    present
        .into_iter()
        .map(|score| match score {
            None => 0.0,
            Some(_) if denom <= 0.0 => 1.0,
            Some(s) => (offset.exp() * (s - lo).exp_m1() / denom).clamp(0.0, 1.0),
        })
        .collect()
}

pub fn rerank(request: &RerankRequest) -> Result<RerankResult, ValidationError> {
    validate_alpha(request.alpha)?;
    let original = &request.original;
    original.validate()?;

    let base = match (request.base, &original.engine_scores) {
        (BaseScoring::Auto | BaseScoring::Engine, Some(scores)) => min_max(scores),
        (BaseScoring::Engine, None) => {
            return Err(ValidationError::Invalid(
                "engine base scoring requested without engine_scores".into(),
            ))
        }
        _ => normalize_positions(original)?,
    };
    let rec = recommendation_components(&original.items, &request.recommendations);
    let alpha = request.alpha;
    let blended: Vec<f64> = base
        .iter()
        .zip(&rec)
        .map(|(b, r)| ((1.0 - alpha) * b + alpha * r).clamp(0.0, 1.0))
        .collect();

    let mut order: Vec<usize> = (0..original.items.len()).collect();
    order.sort_by(|&a, &b| blended[b].total_cmp(&blended[a]));
    Ok(RerankResult {
        items: order.iter().map(|&i| original.items[i].clone()).collect(),
        final_scores: order.iter().map(|&i| blended[i]).collect(),
    })
}
