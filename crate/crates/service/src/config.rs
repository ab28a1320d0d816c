use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use usagegraph_core::pipeline::PipelineConfig;
use usagegraph_core::rerank::validate_alpha;
use usagegraph_core::ScoringParams;

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Memory,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub event_workers: usize,
    pub recbuild_workers: usize,
    pub backend: BackendKind,
    /// Queue and cache directory for the file backend.
    pub data_dir: Option<PathBuf>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let defaults = PipelineConfig::default();
        Self {
            event_workers: defaults.event_workers,
            recbuild_workers: defaults.recbuild_workers,
            backend: BackendKind::Memory,
            data_dir: None,
        }
    }
}

/// Service settings, read from TOML.
///
/// ```toml
/// listen = "127.0.0.1:7070"
/// personalization_enabled = true
/// default_alpha = 0.5
/// snapshot_path = "data/graph.snap"
/// stats_log_path = "data/search-log.ndjson"
///
/// [scoring]
/// depth = 3
/// max_usages = 100
/// weighting = "constant"
/// max_results = 200
///
/// [pipeline]
/// event_workers = 2
/// recbuild_workers = 2
/// backend = "file"
/// data_dir = "data/queue"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub personalization_enabled: bool,
    pub default_alpha: f64,
    pub scoring: ScoringParams,
    pub pipeline: PipelineSection,
    /// Loaded at startup when present, written on clean shutdown.
    pub snapshot_path: Option<PathBuf>,
    /// Append-only NDJSON log of search interactions.
    pub stats_log_path: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7070".into(),
            personalization_enabled: true,
            default_alpha: 0.5,
            scoring: ScoringParams {
                max_results: Some(200),
                ..ScoringParams::default()
            },
            pipeline: PipelineSection::default(),
            snapshot_path: None,
            stats_log_path: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ServiceError> {
        let config: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        validate_alpha(self.default_alpha)?;
        self.pipeline_config().validate()?;
        if self.pipeline.backend == BackendKind::File && self.pipeline.data_dir.is_none() {
            return Err(ServiceError::Config("file backend requires pipeline.data_dir".into()));
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            event_workers: self.pipeline.event_workers,
            recbuild_workers: self.pipeline.recbuild_workers,
            scoring: self.scoring.clone(),
        }
    }
}
