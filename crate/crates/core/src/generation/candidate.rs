use serde::{Deserialize, Serialize};

use super::{GenerationError, Generator, InfillRequest, KeyStructure, Result};
use crate::attribution::{MaskedTemplate, MASK_SENTINEL};
use crate::corpus::{
    validate_instance, CorpusError, EntityMention, Provenance, Span, Task, TaskInstance,
};

/// How an entity's span in the candidate was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    /// Wrapped in entity markers by the generator.
    Marked(Span),
    /// Surface occurs exactly once.
    Unique(Span),
    /// Surface occurs several times and no marker disambiguates it.
    Ambiguous { occurrences: usize },
}

impl Recovery {
    pub fn span(&self) -> Option<Span> {
        match self {
            Recovery::Marked(s) | Recovery::Unique(s) => Some(*s),
            Recovery::Ambiguous { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredEntity {
    pub entity_type: String,
    pub surface: String,
    pub recovery: Recovery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub n_keywords: usize,
    pub k_exemplars: usize,
    pub backend: String,
    pub seed: u64,
    pub key_structure_best_effort: bool,
}

/// A generated sentence with its entities located.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugCandidate {
    pub parent_id: String,
    pub tokens: Vec<String>,
    /// One per template entity, in template order.
    pub entities: Vec<RecoveredEntity>,
    /// Candidate equals the parent sentence.
    pub trivial: bool,
    pub meta: GenerationMeta,
}

impl AugCandidate {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

fn parse_open(tok: &str) -> Option<&str> {
    tok.strip_prefix("<s:")?.strip_suffix('>')
}

fn parse_close(tok: &str) -> Option<&str> {
    tok.strip_prefix("</s:")?.strip_suffix('>')
}

fn violation(msg: impl Into<String>) -> GenerationError {
    GenerationError::ContractViolation(msg.into())
}

/// Strips entity markers from `tokens` and locates each expected entity.
///
/// Returns the marker-free tokens. Fails when a marker is unbalanced, when
/// the sentinel survives, or when an entity surface is missing.
pub fn recover_entities(
    tokens: &[String],
    expected: &[(String, String)],
) -> Result<(Vec<String>, Vec<RecoveredEntity>)> {
    let mut plain: Vec<String> = Vec::with_capacity(tokens.len());
    let mut marked: Vec<(String, Span)> = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for tok in tokens {
        if let Some(ty) = parse_open(tok) {
            if open.is_some() {
                return Err(violation("nested entity markers"));
            }
            open = Some((ty.to_string(), plain.len()));
        } else if let Some(ty) = parse_close(tok) {
            match open.take() {
                Some((oty, start)) if oty == ty && plain.len() > start => {
                    marked.push((ty.to_string(), Span::new(start, plain.len() - 1)));
                }
                _ => return Err(violation("unbalanced entity markers")),
            }
        } else {
            plain.push(tok.clone());
        }
    }
    if open.is_some() {
        return Err(violation("unbalanced entity markers"));
    }
    if plain.iter().any(|t| t == MASK_SENTINEL) {
        return Err(violation("output contains the mask sentinel"));
    }
    if plain.is_empty() {
        return Err(violation("output is empty"));
    }

    let mut used = vec![false; marked.len()];
    let mut out = Vec::with_capacity(expected.len());
    for (ty, surface) in expected {
        let words: Vec<&str> = surface.split(' ').collect();
        let matches_at = |sp: &Span| {
            sp.len() == words.len() && sp.indices().zip(&words).all(|(i, w)| plain[i] == *w)
        };
        if let Some(m) = marked
            .iter()
            .enumerate()
            .position(|(i, (mty, sp))| !used[i] && mty == ty && matches_at(sp))
        {
            used[m] = true;
            out.push(RecoveredEntity {
                entity_type: ty.clone(),
                surface: surface.clone(),
                recovery: Recovery::Marked(marked[m].1),
            });
            continue;
        }
        let occurrences: Vec<Span> = (0..plain.len().saturating_sub(words.len() - 1))
            .map(|s| Span::new(s, s + words.len() - 1))
            .filter(|sp| matches_at(sp))
            .collect();
        let recovery = match occurrences.as_slice() {
            [] => return Err(violation(format!("entity `{surface}` missing from output"))),
            [one] => Recovery::Unique(*one),
            many => Recovery::Ambiguous {
                occurrences: many.len(),
            },
        };
        out.push(RecoveredEntity {
            entity_type: ty.clone(),
            surface: surface.clone(),
            recovery,
        });
    }
    Ok((plain, out))
}

/// Asks the generator to fill `template` and checks its output.
pub fn generate_candidate(
    parent: &TaskInstance,
    template: &MaskedTemplate,
    restriction: &str,
    key_structure: &KeyStructure,
    backend: &dyn Generator,
    seed: u64,
    meta: GenerationMeta,
) -> Result<AugCandidate> {
    let request = InfillRequest {
        template_tokens: template.tokens(),
        mask_sentinel: MASK_SENTINEL.to_string(),
        restriction_text: restriction.to_string(),
        key_structure: key_structure.text.clone(),
        seed,
    };
    let output = backend
        .infill(&request)
        .map_err(|source| GenerationError::Backend {
            backend: backend.id().to_string(),
            source,
        })?;
    let expected: Vec<(String, String)> = template
        .entities
        .iter()
        .map(|e| (e.entity_type.clone(), e.surface.clone()))
        .collect();
    let (tokens, entities) = recover_entities(&output, &expected)?;
    let trivial = tokens.len() == parent.tokens.len()
        && tokens.iter().zip(&parent.tokens).all(|(a, b)| *a == b.text);
    Ok(AugCandidate {
        parent_id: parent.id.clone(),
        tokens,
        entities,
        trivial,
        meta,
    })
}

/// Builds the augmented instance: candidate tokens, the parent's labels and
/// entity spans re-located in the candidate.
///
/// For RE only the pair is carried over (as entities 0 and 1); for NER every
/// entity is, in template order.
pub fn project_labels(parent: &TaskInstance, cand: &AugCandidate) -> Result<TaskInstance> {
    let mut entities = Vec::with_capacity(cand.entities.len());
    for e in &cand.entities {
        let span = e
            .recovery
            .span()
            .ok_or_else(|| GenerationError::AmbiguousSpan(e.surface.clone()))?;
        if entities
            .iter()
            .any(|m: &EntityMention| m.span().overlaps(&span))
        {
            return Err(GenerationError::AmbiguousSpan(e.surface.clone()));
        }
        entities.push(EntityMention::from_tokens(
            &cand.tokens,
            span,
            &e.entity_type,
        ));
    }

    let mut inst = TaskInstance::new(
        format!("{}#aug", parent.id),
        parent.task,
        cand.tokens.clone(),
    );
    inst.provenance = Provenance::Augmented {
        parent_id: parent.id.clone(),
    };
    inst.topics = parent.topics.clone();
    inst.question = parent.question.clone();
    inst.answer = parent.answer.clone();
    match parent.task {
        Task::Re => {
            inst.entities = entities;
            inst.pair = Some([0, 1]);
            inst.relation = parent.relation.clone();
        }
        Task::Ner => inst.entities = entities,
        Task::Tc | Task::Qa => {}
    }
    let report = validate_instance(&inst);
    if !report.is_empty() {
        return Err(CorpusError::Invalid {
            id: inst.id.clone(),
            report,
        }
        .into());
    }
    Ok(inst)
}
