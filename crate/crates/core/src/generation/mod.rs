//! Candidate generation: structural exemplars, the key-structure loop, the
//! infill backend contract and label projection onto the output.

mod candidate;
mod exemplars;
mod key_structure;
mod similarity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::corpus::CorpusError;

pub use candidate::{
    generate_candidate, project_labels, recover_entities, AugCandidate, GenerationMeta,
    RecoveredEntity, Recovery,
};
pub use exemplars::{sample_similar, ExemplarQuery};
pub use key_structure::{
    extract_key_structure, KeyStructure, DEFAULT_MAX_ROUNDS, DEFAULT_THRESHOLD,
};
pub use similarity::{similarity, SimilarityMeasure, TokenLcs};

/// Default number of structural exemplars.
pub const DEFAULT_EXEMPLARS: usize = 3;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("{backend} call failed: {source}")]
    Backend {
        backend: String,
        #[source]
        source: BackendError,
    },
    #[error("no structural exemplars for label `{0}`")]
    NoExemplars(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("key-structure extraction needs at least one exemplar and one round")]
    InvalidExtraction,
    #[error("generator contract violated: {0}")]
    ContractViolation(String),
    #[error("entity `{0}` occurs more than once in the candidate and is not marked")]
    AmbiguousSpan(String),
    #[error("projected instance is invalid: {0}")]
    Invalid(#[from] CorpusError),
}

impl GenerationError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, GenerationError::Backend { source, .. } if source.is_retriable())
    }
}

pub type Result<T, E = GenerationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InfillRequest {
    pub template_tokens: Vec<String>,
    pub mask_sentinel: String,
    pub restriction_text: String,
    pub key_structure: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfillResponse {
    pub tokens: Vec<String>,
}

/// Fills the masked slots of a template.
///
/// Output must contain every marked entity surface verbatim and no mask
/// sentinel. Entity markers may be kept around entities in the output; they
/// pin entity positions and are stripped before use.
pub trait Generator: Send + Sync {
    fn id(&self) -> &str;
    fn infill(&self, request: &InfillRequest) -> Result<Vec<String>, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailingPair {
    pub source_index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRequest {
    /// Target sentence first, then the exemplars; each already joined with
    /// the restriction text.
    pub concatenated_sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failing_pairs: Option<Vec<FailingPair>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractResponse {
    pub structure_text: String,
}

/// Proposes a key-structure string for a group of sentences.
pub trait Extractor: Send + Sync {
    fn id(&self) -> &str;
    fn extract(&self, request: &ExtractRequest) -> Result<String, BackendError>;
}

impl<G: Generator + ?Sized> Generator for std::sync::Arc<G> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn infill(&self, request: &InfillRequest) -> Result<Vec<String>, BackendError> {
        (**self).infill(request)
    }
}

impl<X: Extractor + ?Sized> Extractor for std::sync::Arc<X> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn extract(&self, request: &ExtractRequest) -> Result<String, BackendError> {
        (**self).extract(request)
    }
}
