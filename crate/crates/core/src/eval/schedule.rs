use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

/// Importance factors drawn at random per fixed-length time bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub factors: Vec<f64>,
    pub bucket_seconds: i64,
    pub seed: u64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            factors: vec![0.0, 0.3, 0.5, 0.6, 0.9, 1.0],
            bucket_seconds: 600,
            seed: 0,
        }
    }
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.factors.is_empty() {
            return Err(ValidationError::Invalid("schedule needs at least one factor".into()));
        }
        if let Some(&bad) = self.factors.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(ValidationError::AlphaOutOfRange(bad));
        }
        if self.bucket_seconds <= 0 {
            return Err(ValidationError::Invalid("bucket_seconds must be positive".into()));
        }
        Ok(())
    }
}

/// The importance factor in force at `ts`. Every timestamp in the same
/// bucket maps to the same factor; each bucket draws from its own stream.
pub fn method_for_bucket(ts: i64, schedule: &ScheduleSpec) -> f64 {
    let bucket = ts.div_euclid(schedule.bucket_seconds);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    rng.set_stream(bucket as u64);
    schedule.factors[rng.random_range(0..schedule.factors.len())]
}
