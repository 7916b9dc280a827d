//! Canonical data model for NER, RE, TC and QA instances.
//!
//! Every third-party format is normalized into [`TaskInstance`] records at
//! ingest. The rest of the crate only ever sees this schema.

mod formats;
mod target;
mod tokenize;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use formats::{load_dataset, read_dataset, write_dataset, write_dataset_to, DatasetFormat};
pub use target::{derive_attribution_target, AttributionTarget, NotionTable, RelationNotion};
pub use tokenize::tokenize;
pub use validate::{validate_dataset, validate_instance, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Record {
        line: usize,
        field: String,
        message: String,
    },
    #[error("unknown dataset format `{0}`")]
    UnknownFormat(String),
    #[error("no definition for label `{0}`")]
    MissingDefinition(String),
    #[error("instance `{id}` is invalid: {report}")]
    Invalid {
        id: String,
        report: ValidationReport,
    },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// The four supported task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "NER")]
    Ner,
    #[serde(rename = "RE")]
    Re,
    #[serde(rename = "TC")]
    Tc,
    #[serde(rename = "QA")]
    Qa,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Ner => "NER",
            Task::Re => "RE",
            Task::Tc => "TC",
            Task::Qa => "QA",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NER" => Ok(Task::Ner),
            "RE" => Ok(Task::Re),
            "TC" => Ok(Task::Tc),
            "QA" => Ok(Task::Qa),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// A single token. `offset` is the byte range in the source text when the
/// token came from raw text rather than a pre-tokenized format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub index: usize,
    pub offset: Option<(usize, usize)>,
}

/// Inclusive token range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn single(index: usize) -> Self {
        Span::new(index, index)
    }

    /// Token count; a span is never empty.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub surface: String,
}

impl EntityMention {
    /// Builds a mention whose surface is taken from `tokens`.
    pub fn from_tokens(tokens: &[String], span: Span, entity_type: impl Into<String>) -> Self {
        let surface = tokens[span.start..=span.end].join(" ");
        EntityMention {
            start: span.start,
            end: span.end,
            entity_type: entity_type.into(),
            surface,
        }
    }

    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }

    /// Surface split back into tokens.
    pub fn surface_tokens(&self) -> Vec<&str> {
        self.surface.split_whitespace().collect()
    }
}

/// Where an instance came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Provenance {
    #[default]
    Original,
    Augmented {
        parent_id: String,
    },
}

impl Provenance {
    fn is_original(&self) -> bool {
        matches!(self, Provenance::Original)
    }
}

/// One labeled example in the canonical schema.
///
/// `tokens` holds the sentence (or the passage, for QA). RE instances keep
/// their ordered entity pair as indices into `entities`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawInstance", into = "RawInstance")]
pub struct TaskInstance {
    pub id: String,
    pub task: Task,
    pub tokens: Vec<Token>,
    pub entities: Vec<EntityMention>,
    pub pair: Option<[usize; 2]>,
    pub relation: Option<String>,
    pub topics: Vec<String>,
    pub question: Option<String>,
    pub answer: Option<String>,
    pub provenance: Provenance,
}

impl TaskInstance {
    /// An instance with the given tokens and no labels; callers fill in the
    /// task-specific fields.
    pub fn new(id: impl Into<String>, task: Task, tokens: Vec<String>) -> Self {
        TaskInstance {
            id: id.into(),
            task,
            tokens: tokens
                .into_iter()
                .enumerate()
                .map(|(index, text)| Token {
                    text,
                    index,
                    offset: None,
                })
                .collect(),
            entities: Vec::new(),
            pair: None,
            relation: None,
            topics: Vec::new(),
            question: None,
            answer: None,
            provenance: Provenance::Original,
        }
    }

    /// Builds an instance by tokenizing raw text, keeping byte offsets.
    pub fn from_text(id: impl Into<String>, task: Task, text: &str) -> Self {
        let mut inst = TaskInstance::new(id, task, Vec::new());
        inst.tokens = tokenize(text);
        inst
    }

    pub fn token_texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The ordered RE pair, if present and resolvable.
    pub fn entity_pair(&self) -> Option<(&EntityMention, &EntityMention)> {
        let [a, b] = self.pair?;
        Some((self.entities.get(a)?, self.entities.get(b)?))
    }

    pub fn parent_id(&self) -> Option<&str> {
        match &self.provenance {
            Provenance::Original => None,
            Provenance::Augmented { parent_id } => Some(parent_id),
        }
    }

    pub fn with_entity(mut self, span: Span, entity_type: &str) -> Self {
        let tokens = self.token_texts();
        self.entities
            .push(EntityMention::from_tokens(&tokens, span, entity_type));
        self
    }

    pub fn with_relation(mut self, e1: usize, e2: usize, relation: &str) -> Self {
        self.pair = Some([e1, e2]);
        self.relation = Some(relation.to_string());
        self
    }
}

/// An ordered collection of instances.
pub type Dataset = Vec<TaskInstance>;

// On-disk shape of a record. Field order here is the byte order of the
// canonical format.
#[derive(Serialize, Deserialize)]
struct RawInstance {
    id: String,
    task: Task,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offsets: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    entities: Vec<EntityMention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relation: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    topics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
    #[serde(default, skip_serializing_if = "Provenance::is_original")]
    provenance: Provenance,
}

impl From<RawInstance> for TaskInstance {
    fn from(raw: RawInstance) -> Self {
        let offsets = raw.offsets.filter(|o| o.len() == raw.tokens.len());
        let tokens = raw
            .tokens
            .into_iter()
            .enumerate()
            .map(|(index, text)| Token {
                text,
                index,
                offset: offsets.as_ref().map(|o| o[index]),
            })
            .collect();
        TaskInstance {
            id: raw.id,
            task: raw.task,
            tokens,
            entities: raw.entities,
            pair: raw.pair,
            relation: raw.relation,
            topics: raw.topics,
            question: raw.question,
            answer: raw.answer,
            provenance: raw.provenance,
        }
    }
}

impl From<TaskInstance> for RawInstance {
    fn from(inst: TaskInstance) -> Self {
        let offsets = if !inst.tokens.is_empty() && inst.tokens.iter().all(|t| t.offset.is_some()) {
            Some(inst.tokens.iter().filter_map(|t| t.offset).collect())
        } else {
            None
        };
        RawInstance {
            id: inst.id,
            task: inst.task,
            tokens: inst.tokens.into_iter().map(|t| t.text).collect(),
            offsets,
            entities: inst.entities,
            pair: inst.pair,
            relation: inst.relation,
            topics: inst.topics,
            question: inst.question,
            answer: inst.answer,
            provenance: inst.provenance,
        }
    }
}
