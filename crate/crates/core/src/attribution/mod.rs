//! Where to rewrite: leave-one-out contribution maps, their normalization,
//! keyword selection and the masked, entity-marked template.
//!
//! Two maps are computed over the same candidate tokens (every token outside
//! the target spans):
//!
//! * the **lexicon** map scores how much each token contributes to the
//!   target under a task-logit scorer;
//! * the **relation** map scores how much each token contributes to the
//!   relativity between the sentence and a restriction text (a relation
//!   definition, say) under an inference scorer.
//!
//! Both use the same removal algebra. With `E` the target spans and `s` the
//! sentence, `attr(E) = attr(s) - attr(s \ E)` and, for a candidate `w`,
//! `attr(E \ w) = attr(s \ w) - attr(s \ {E, w})`; the contribution of `w` is
//! `attr(E) - attr(E \ w)`. Multi-token spans are removed as one unit. When
//! there are no target spans the whole passage is the target, so `s \ E` is
//! the empty sequence.

mod loo;
mod normalize;
mod select;
mod template;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::corpus::Span;

pub use loo::{attr_bio, attr_lexicon, pair_contribution, LooScorer};
pub use normalize::{normalize_bio, normalize_lexicon, normalize_rank};
pub use select::{default_keyword_count, select_keywords, KeywordSet};
pub use template::{
    escape_token, unescape_token, EntityMarker, MarkedEntity, MaskedTemplate, Slot, TemplateError,
    MASK_SENTINEL,
};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("scorer failed on sequence {fingerprint}: {source}")]
    Backend {
        fingerprint: String,
        #[source]
        source: BackendError,
    },
    #[error("no candidate keywords: {candidates} token(s) outside the target, need at least 2")]
    NoCandidates { candidates: usize },
    #[error("invalid target span {span} for a sentence of {len} tokens")]
    InvalidSpan { span: Span, len: usize },
    #[error("target spans {0} and {1} overlap")]
    OverlappingTargets(Span, Span),
    #[error("relation map needs a non-empty restriction text")]
    MissingRestriction,
    #[error("expected a {expected} scorer, got {found}")]
    WrongScorerKind {
        expected: ScorerKind,
        found: ScorerKind,
    },
    #[error("degenerate instance: {0}")]
    Degenerate(String),
    #[error("keyword count must be at least 1")]
    InvalidKeywordCount,
    #[error("{0} map is not normalized")]
    NotNormalized(MapKind),
    #[error("maps cover different candidate tokens")]
    MismatchedMaps,
}

impl AttributionError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, AttributionError::Backend { source, .. } if source.is_retriable())
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, AttributionError::Degenerate(_))
    }
}

pub type Result<T, E = AttributionError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    TaskLogit,
    InferenceRelativity,
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::TaskLogit => "task-logit",
            ScorerKind::InferenceRelativity => "inference-relativity",
        })
    }
}

/// Scorer request as sent over the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub sequence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restriction_text: Option<String>,
    pub kind: ScorerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub score: f64,
}

/// A model that maps a token sequence to a real score.
///
/// Must be deterministic for a fixed request within one run and defined on
/// the empty sequence.
pub trait Scorer: Send + Sync {
    fn id(&self) -> &str;
    fn kind(&self) -> ScorerKind;
    fn score(&self, request: &ScoreRequest) -> Result<f64, BackendError>;
}

impl<S: Scorer + ?Sized> Scorer for std::sync::Arc<S> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn kind(&self) -> ScorerKind {
        (**self).kind()
    }
    fn score(&self, request: &ScoreRequest) -> Result<f64, BackendError> {
        (**self).score(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Lexicon,
    Relation,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapKind::Lexicon => "lexicon",
            MapKind::Relation => "relation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapStatus {
    Raw,
    Normalized,
    /// Reference contribution was not positive; values are rank-derived.
    RankFallback,
}

/// Scores recorded alongside a map.
///
/// Raw maps hold `attr(s)` and `attr(s \ E)`. After relation normalization
/// these are pinned to exactly 1 and 0; after lexicon normalization
/// `reference` is pinned to exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub full_sentence: f64,
    pub without_target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

/// Per-token contributions toward one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub kind: MapKind,
    pub entries: BTreeMap<usize, f64>,
    pub target: Vec<Span>,
    pub status: MapStatus,
    pub anchors: Anchors,
}

impl AttributionMap {
    pub fn is_normalized(&self) -> bool {
        self.status != MapStatus::Raw
    }

    /// Candidate indices ordered by descending score, ties by lower index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self.entries.keys().copied().collect();
        idx.sort_by(|a, b| {
            self.entries[b]
                .total_cmp(&self.entries[a])
                .then_with(|| a.cmp(b))
        });
        idx
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.entries.get(&index).copied()
    }
}

/// Both maps plus the selected keywords, as emitted by `attribute`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionReport {
    pub instance_id: String,
    pub tokens: Vec<String>,
    pub restriction_text: String,
    pub lexicon: AttributionMap,
    pub relation: AttributionMap,
    pub keywords: KeywordSet,
    pub template: String,
}
