use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::hit_rate;
use super::split::{split_and_sample, EvalCase, HeldoutPolicy, Split, SplitMode, SplitSpec};
use super::EvalError;
use crate::graph::{Graph, InteractionEvent, NodeRef};
use crate::scoring::{recommend, ScoredItem, ScoringParams, Weighting};

pub const CSV_HEADER: &str = "t,n,d,w,mean_hit_rate,stddev,users,repetitions";

/// Parameter axes. `None` in `time_frames` means all training data, in
/// `usage_windows` no per-user limit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Seconds of training history before the cut.
    pub time_frames: Vec<Option<i64>>,
    pub usage_windows: Vec<Option<usize>>,
    pub depths: Vec<u32>,
    pub weightings: Vec<Weighting>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            time_frames: vec![None],
            usage_windows: (1..=8).map(|k| Some(k * 25)).collect(),
            depths: (1..=8).collect(),
            weightings: Weighting::ALL.to_vec(),
        }
    }
}

impl SweepGrid {
    fn validate(&self) -> Result<(), EvalError> {
        if self.time_frames.is_empty()
            || self.usage_windows.is_empty()
            || self.depths.is_empty()
            || self.weightings.is_empty()
        {
            return Err(EvalError::Empty("sweep grid axis"));
        }
        for &depth in &self.depths {
            ScoringParams::with_depth(depth).validate()?;
        }
        if self.usage_windows.contains(&Some(0)) {
            return Err(crate::error::ValidationError::ZeroUsageWindow.into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub time_frame: Option<i64>,
    pub usage_window: Option<usize>,
    pub depth: u32,
    pub weighting: Weighting,
    pub mean_hit_rate: f64,
    pub stddev: f64,
    pub users: usize,
    pub repetitions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Best mean hit rate first.
    pub rows: Vec<SweepRow>,
}

fn opt_cell<T: ToString>(value: Option<T>) -> String {
    value.map_or_else(|| "all".to_owned(), |v| v.to_string())
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{},{}",
                opt_cell(row.time_frame),
                opt_cell(row.usage_window),
                row.depth,
                row.weighting,
                row.mean_hit_rate,
                row.stddev,
                row.users,
                row.repetitions
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.first()
    }
}

fn ranked_for_case(graph: &Graph, case: &EvalCase, params: &ScoringParams, policy: HeldoutPolicy) -> Vec<ScoredItem> {
    let params = ScoringParams {
        as_of: case.as_of,
        max_results: None,
        ..params.clone()
    };
    let list = recommend(graph, &case.user, &params);
    match policy {
        HeldoutPolicy::AllItems => list.items,
        HeldoutPolicy::NewItems => {
            let known: HashSet<String> = graph
                .neighbors(NodeRef::User(&case.user), case.as_of, None)
                .into_iter()
                .map(|e| e.item_id)
                .collect();
            list.items
                .into_iter()
                .filter(|item| !known.contains(&item.item_id))
                .collect()
        }
    }
}

/// Hit rate of every case under `params`, in case order.
pub fn evaluate_cases(
    graph: &Graph,
    cases: &[EvalCase],
    params: &ScoringParams,
    policy: HeldoutPolicy,
) -> Vec<f64> {
    cases
        .iter()
        .map(|case| hit_rate(&ranked_for_case(graph, case, params, policy), &case.heldout))
        .collect()
}

fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn window_graph(split: &Split, cut_ts: i64, frame: Option<i64>) -> Graph {
    let mut graph = Graph::new();
    let start = frame.map(|t| cut_ts - t);
    graph.batch_import(
        split
            .train_events
            .iter()
            .filter(|e| start.is_none_or(|s| e.ts > s))
            .cloned(),
    );
    graph
}

/// Evaluate every grid point and rank them by mean hit rate.
///
/// The same sampled users are scored at every grid point. Each time frame
/// gets its own train graph restricted to that much history before the cut.
pub fn sweep(events: &[InteractionEvent], spec: &SplitSpec, grid: &SweepGrid) -> Result<SweepReport, EvalError> {
    grid.validate()?;
    if spec.mode == SplitMode::RandomTime && grid.time_frames.iter().any(Option::is_some) {
        return Err(EvalError::TimeFrameUnsupported);
    }
    let split = split_and_sample(events, spec)?;
    let cases: Vec<&EvalCase> = split.samples.iter().flatten().collect();
    let frames: BTreeSet<Option<i64>> = grid.time_frames.iter().copied().collect();

    let mut rows = Vec::new();
    for frame in frames {
        let windowed;
        let graph = match frame {
            None => &split.train,
            Some(_) => {
                windowed = window_graph(&split, spec.cut_ts, frame);
                &windowed
            }
        };
        let mut points = Vec::new();
        for &usage_window in &grid.usage_windows {
            for &depth in &grid.depths {
                for &weighting in &grid.weightings {
                    points.push(ScoringParams {
                        depth,
                        max_usages: usage_window,
                        weighting,
                        as_of: None,
                        max_results: None,
                    });
                }
            }
        }
        let frame_rows: Vec<SweepRow> = points
            .par_iter()
            .map(|params| {
                let rates: Vec<f64> = cases
                    .iter()
                    .map(|case| {
                        hit_rate(
                            &ranked_for_case(graph, case, params, split.heldout_policy),
                            &case.heldout,
                        )
                    })
                    .collect();
                let (mean, stddev) = mean_and_stddev(&rates);
                SweepRow {
                    time_frame: frame,
                    usage_window: params.max_usages,
                    depth: params.depth,
                    weighting: params.weighting,
                    mean_hit_rate: mean,
                    stddev,
                    users: spec.sample_size,
                    repetitions: spec.repetitions,
                }
            })
            .collect();
        rows.extend(frame_rows);
    }
    rows.sort_by(|a, b| {
        b.mean_hit_rate
            .total_cmp(&a.mean_hit_rate)
            .then_with(|| a.time_frame.cmp(&b.time_frame))
            .then_with(|| a.usage_window.cmp(&b.usage_window))
            .then_with(|| a.depth.cmp(&b.depth))
            .then_with(|| a.weighting.cmp(&b.weighting))
    });
    Ok(SweepReport { rows })
}
