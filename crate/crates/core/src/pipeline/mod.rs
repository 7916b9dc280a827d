//! Orchestration: configuration, backend wiring and caching, the per-instance
//! augmentation chain, proportion subsets, metrics and run reports.
//!
//! One instance goes through attribution, template masking, exemplar
//! sampling, the key-structure loop, candidate generation and the debate.
//! Any failure along the way puts that instance in the degenerate bucket;
//! the run itself only stops on configuration or I/O errors.

mod cached;
mod config;
mod metrics;
mod report;
mod run;

use thiserror::Error;

use crate::corpus::CorpusError;

pub use cached::Cached;
pub use config::{
    BackendConfig, BackendMode, EvaluationConfig, MockExtractor, MockGenerator, MockScorer,
    OutputConfig, RunConfig, ENV_API_KEY, ENV_ENDPOINT,
};
pub use metrics::{
    answer_accuracy, average_topic_f1, compute_metrics, entity_confusion, relation_confusion,
    Confusion, MetricTable, NEGATIVE_RELATIONS,
};
pub use report::{
    Counts, InstanceStatus, InstanceSummary, LogicalCacheStats, RunReport, StageTimings, Timings,
};
pub use run::{
    attribute_instance, augment, augment_dataset, augment_instance, select_subset,
    transcript_file_name, Attributed, AugmentOutput, Backends, InstanceOutcome, Stage, StageError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("prediction ids do not match gold ids (missing: {missing:?}, extra: {extra:?})")]
    IdMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
}

impl PipelineError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
