use thiserror::Error;

/// Input that violates a domain invariant. Nothing is mutated when one of
/// these is returned.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("user id must not be empty")]
    EmptyUser,
    #[error("item id must not be empty")]
    EmptyItem,
    #[error("verb must not be empty")]
    EmptyVerb,
    #[error("timestamp must be non-negative, got {0}")]
    NegativeTimestamp(i64),
    #[error("depth must be within 1..=8, got {0}")]
    DepthOutOfRange(u32),
    #[error("max_usages must be at least 1")]
    ZeroUsageWindow,
    #[error("unknown weighting {0:?}")]
    UnknownWeighting(String),
    #[error("importance factor must be within [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("result list must not be empty")]
    EmptyResultList,
    #[error("duplicate item {0:?} in result list")]
    DuplicateItem(String),
    #[error("engine_scores has {got} entries for {expected} items")]
    EngineScoreLength { expected: usize, got: usize },
    #[error("non-finite engine score")]
    NonFiniteScore,
    #[error("engine score at position {0} exceeds the one ranked above it")]
    EngineScoresUnranked(usize),
    #[error("clicked item {0:?} is not among the shown items")]
    ClickedNotShown(String),
    #[error("{0}")]
    Invalid(String),
}
