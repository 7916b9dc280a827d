use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntityMention, Span};

/// Reserved mask token. Backends translate it to their own mask symbol.
pub const MASK_SENTINEL: &str = "[M]";

const SEPARATOR: &str = " | ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("keyword index {0} is outside the sentence")]
    KeywordOutOfRange(usize),
    #[error("entity `{surface}` at {span} does not match the sentence")]
    EntityMismatch { span: Span, surface: String },
    #[error("entity type `{0}` cannot be rendered inside a marker")]
    BadEntityType(String),
    #[error("template has {found} slots, sentence has {expected} tokens")]
    LengthMismatch { expected: usize, found: usize },
    #[error("slot {0} does not match the sentence")]
    SlotMismatch(usize),
    #[error("malformed marker `{0}`")]
    MalformedMarker(String),
    #[error("entity `{0}` cannot be located in the template")]
    EntityNotFound(String),
    #[error("entity `{0}` matches more than one kept span")]
    Ambiguous(String),
}

/// Opening and closing markers for one entity type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMarker {
    pub entity_type: String,
}

impl EntityMarker {
    pub fn new(entity_type: impl Into<String>) -> Self {
        EntityMarker {
            entity_type: entity_type.into(),
        }
    }

    pub fn open(&self) -> String {
        format!("<s:{}>", self.entity_type)
    }

    pub fn close(&self) -> String {
        format!("</s:{}>", self.entity_type)
    }

    /// `<s:TYPE> surface </s:TYPE>` with the surface escaped.
    pub fn wrap(&self, surface: &str) -> String {
        let body: Vec<String> = surface.split_whitespace().map(escape_token).collect();
        format!("{} {} {}", self.open(), body.join(" "), self.close())
    }

    fn valid_type(t: &str) -> bool {
        !t.is_empty() && !t.contains(|c: char| c.is_whitespace() || c == '<' || c == '>')
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Mask,
    Keep(String),
}

/// An entity appended after the masked sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedEntity {
    pub span: Span,
    pub entity_type: String,
    pub surface: String,
}

/// The masked sentence followed by its marker-wrapped entities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedTemplate {
    pub slots: Vec<Slot>,
    pub entities: Vec<MarkedEntity>,
}

/// Escapes `\` and `<`; a token that is exactly the sentinel or the separator
/// bar gets a leading backslash.
pub fn escape_token(token: &str) -> String {
    let mut out = token.replace('\\', "\\\\").replace('<', "\\<");
    if out == MASK_SENTINEL || out == "|" {
        out.insert(0, '\\');
    }
    out
}

pub fn unescape_token(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    let mut chars = token.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(n) = chars.next() {
                out.push(n);
            }
        } else {
            out.push(c);
        }
    }
    out
}

impl MaskedTemplate {
    /// Masks every token outside `keywords` and the entity spans, then
    /// appends the entities (in the given order) wrapped in markers.
    pub fn build(
        tokens: &[String],
        keywords: &BTreeSet<usize>,
        entities: &[EntityMention],
    ) -> Result<Self, TemplateError> {
        if let Some(&k) = keywords.iter().find(|&&k| k >= tokens.len()) {
            return Err(TemplateError::KeywordOutOfRange(k));
        }
        let mut marked = Vec::with_capacity(entities.len());
        for e in entities {
            let span = e.span();
            if span.start > span.end
                || span.end >= tokens.len()
                || tokens[span.start..=span.end].join(" ") != e.surface
            {
                return Err(TemplateError::EntityMismatch {
                    span,
                    surface: e.surface.clone(),
                });
            }
            if !EntityMarker::valid_type(&e.entity_type) {
                return Err(TemplateError::BadEntityType(e.entity_type.clone()));
            }
            marked.push(MarkedEntity {
                span,
                entity_type: e.entity_type.clone(),
                surface: e.surface.clone(),
            });
        }
        let slots = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if keywords.contains(&i) || marked.iter().any(|m| m.span.contains(i)) {
                    Slot::Keep(t.clone())
                } else {
                    Slot::Mask
                }
            })
            .collect();
        Ok(MaskedTemplate {
            slots,
            entities: marked,
        })
    }

    pub fn mask_count(&self) -> usize {
        self.slots.iter().filter(|s| **s == Slot::Mask).count()
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Slot::Mask)
            .map(|(i, _)| i)
            .collect()
    }

    /// Whitespace-separated rendered tokens, as sent to a generator.
    pub fn tokens(&self) -> Vec<String> {
        self.render().split(' ').map(String::from).collect()
    }

    pub fn render(&self) -> String {
        let mut out = self
            .slots
            .iter()
            .map(|s| match s {
                Slot::Mask => MASK_SENTINEL.to_string(),
                Slot::Keep(t) => escape_token(t),
            })
            .collect::<Vec<_>>()
            .join(" ");
        for e in &self.entities {
            out.push_str(SEPARATOR);
            out.push_str(&EntityMarker::new(&e.entity_type).wrap(&e.surface));
        }
        out
    }

    /// Recovers the keyword set and the entity spans given the original
    /// sentence. Checks every slot and marker against the sentence.
    pub fn invert(
        &self,
        sentence: &[String],
    ) -> Result<(BTreeSet<usize>, Vec<Span>), TemplateError> {
        if self.slots.len() != sentence.len() {
            return Err(TemplateError::LengthMismatch {
                expected: sentence.len(),
                found: self.slots.len(),
            });
        }
        for (i, slot) in self.slots.iter().enumerate() {
            if let Slot::Keep(t) = slot {
                if *t != sentence[i] {
                    return Err(TemplateError::SlotMismatch(i));
                }
            }
        }
        let mut spans = Vec::new();
        for e in &self.entities {
            let s = e.span;
            let ok = s.end < sentence.len()
                && sentence[s.start..=s.end].join(" ") == e.surface
                && s.indices().all(|i| matches!(self.slots[i], Slot::Keep(_)));
            if !ok {
                return Err(TemplateError::EntityMismatch {
                    span: s,
                    surface: e.surface.clone(),
                });
            }
            spans.push(s);
        }
        let kept = self
            .slots
            .iter()
            .enumerate()
            .filter(|(i, s)| matches!(s, Slot::Keep(_)) && !spans.iter().any(|sp| sp.contains(*i)))
            .map(|(i, _)| i)
            .collect();
        Ok((kept, spans))
    }

    /// Parses a rendered template back, locating each marked entity among
    /// the kept runs of `sentence`.
    ///
    /// Rendered text carries no positions, so an entity surface that also
    /// appears as a run of kept keywords cannot be placed; that case is
    /// [`TemplateError::Ambiguous`].
    pub fn parse(rendered: &str, sentence: &[String]) -> Result<Self, TemplateError> {
        let mut parts = rendered.split(SEPARATOR);
        let head = parts.next().unwrap_or_default();
        let raw_slots: Vec<&str> = if head.is_empty() {
            Vec::new()
        } else {
            head.split(' ').collect()
        };
        if raw_slots.len() != sentence.len() {
            return Err(TemplateError::LengthMismatch {
                expected: sentence.len(),
                found: raw_slots.len(),
            });
        }
        let mut slots = Vec::with_capacity(raw_slots.len());
        for (i, raw) in raw_slots.iter().enumerate() {
            if *raw == MASK_SENTINEL {
                slots.push(Slot::Mask);
            } else {
                let t = unescape_token(raw);
                if t != sentence[i] {
                    return Err(TemplateError::SlotMismatch(i));
                }
                slots.push(Slot::Keep(t));
            }
        }

        let mut markers = Vec::new();
        for part in parts {
            markers.push(parse_marker(part)?);
        }

        let kept = |i: usize| matches!(slots[i], Slot::Keep(_));
        let mut entities: Vec<MarkedEntity> = Vec::new();
        for (entity_type, surface) in markers {
            let words: Vec<&str> = surface.split(' ').collect();
            let width = words.len();
            let candidates: Vec<Span> = (0..sentence.len().saturating_sub(width - 1))
                .map(|s| Span::new(s, s + width - 1))
                .filter(|sp| {
                    sp.indices().all(kept)
                        && sp.indices().zip(&words).all(|(i, w)| sentence[i] == *w)
                        && !entities.iter().any(|e| e.span.overlaps(sp))
                })
                .collect();
            match candidates.as_slice() {
                [] => return Err(TemplateError::EntityNotFound(surface)),
                [span] => entities.push(MarkedEntity {
                    span: *span,
                    entity_type,
                    surface,
                }),
                _ => return Err(TemplateError::Ambiguous(surface)),
            }
        }
        Ok(MaskedTemplate { slots, entities })
    }
}

fn parse_marker(part: &str) -> Result<(String, String), TemplateError> {
    let bad = || TemplateError::MalformedMarker(part.to_string());
    let words: Vec<&str> = part.split(' ').collect();
    if words.len() < 3 {
        return Err(bad());
    }
    let open = words[0];
    let close = words[words.len() - 1];
    let ty = open
        .strip_prefix("<s:")
        .and_then(|r| r.strip_suffix('>'))
        .ok_or_else(bad)?;
    if close != format!("</s:{ty}>") || !EntityMarker::valid_type(ty) {
        return Err(bad());
    }
    let surface: Vec<String> = words[1..words.len() - 1]
        .iter()
        .map(|w| unescape_token(w))
        .collect();
    Ok((ty.to_string(), surface.join(" ")))
}

impl fmt::Display for MaskedTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
