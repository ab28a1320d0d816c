//! Offline evaluation: train/test splitting, hit-rate parameter sweeps,
//! rating-error and confusion metrics, importance-factor schedules, click
//! position reports and synthetic interaction logs.

mod clicks;
mod metrics;
mod schedule;
mod split;
mod sweep;
mod synthetic;

pub use clicks::{
    click_position_report, read_search_log, simulate_click_positions, ClickGrouping,
    ClickPositionRow, ClickSimulation, SearchLogEntry,
};
pub use metrics::{confusion, hit_rate, mae, rmse, ConfusionCounts, PredictionPair};
pub use schedule::{method_for_bucket, ScheduleSpec};
pub use split::{split_and_sample, EvalCase, HeldoutPolicy, Split, SplitMode, SplitSpec};
pub use sweep::{evaluate_cases, sweep, SweepGrid, SweepReport, SweepRow, CSV_HEADER};
pub use synthetic::{community_of, generate_synthetic, SyntheticSpec};

use thiserror::Error;

use crate::error::ValidationError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0} requires at least one input")]
    Empty(&'static str),
    #[error("only {eligible} eligible users, {requested} requested (short by {})", requested - eligible)]
    InsufficientUsers { eligible: usize, requested: usize },
    #[error("cut time {cut} outside event range [{min}, {max}]")]
    CutOutOfRange { cut: i64, min: i64, max: i64 },
    #[error("time frames are only supported with the single-cut split")]
    TimeFrameUnsupported,
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
