use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::scoring::ScoredItem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub predicted: f64,
    pub actual: f64,
}

impl PredictionPair {
    pub fn new(predicted: f64, actual: f64) -> Self {
        Self { predicted, actual }
    }
}

/// Root mean squared error.
pub fn rmse(pairs: &[PredictionPair]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty("rmse"));
    }
    let sum: f64 = pairs.iter().map(|p| (p.predicted - p.actual).powi(2)).sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

/// Mean absolute error.
pub fn mae(pairs: &[PredictionPair]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty("mae"));
    }
    let sum: f64 = pairs.iter().map(|p| (p.predicted - p.actual).abs()).sum();
    Ok(sum / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

impl ConfusionCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Usage-prediction outcome counts over a candidate universe.
pub fn confusion(
    recommended: &BTreeSet<String>,
    used: &BTreeSet<String>,
    universe: &BTreeSet<String>,
) -> ConfusionCounts {
    let tp = recommended.intersection(used).count() as u64;
    let fp = recommended.difference(used).count() as u64;
    let fn_ = used.difference(recommended).count() as u64;
    let tn = universe
        .iter()
        .filter(|i| !recommended.contains(*i) && !used.contains(*i))
        .count() as u64;
    ConfusionCounts {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    }
}

/// Fraction of `heldout` found in the top-k recommendations, k = |heldout|.
pub fn hit_rate(recommendations: &[ScoredItem], heldout: &BTreeSet<String>) -> f64 {
    let k = heldout.len();
    if k == 0 {
        return 0.0;
    }
    let hits = recommendations
        .iter()
        .take(k)
        .filter(|r| heldout.contains(&r.item_id))
        .count();
    hits as f64 / k as f64
}
