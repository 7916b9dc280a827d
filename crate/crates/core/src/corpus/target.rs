use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result, Span, Task, TaskInstance};

/// Label plus its free-text definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationNotion {
    pub relation_label: String,
    pub description: String,
}

/// Definitions for relation labels, entity types and topics.
///
/// One table serves all tasks; a label is looked up verbatim.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotionTable {
    notions: BTreeMap<String, String>,
}

impl NotionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: impl Into<String>, description: impl Into<String>) {
        self.notions.insert(label.into(), description.into());
    }

    pub fn with(mut self, label: &str, description: &str) -> Self {
        self.insert(label, description);
        self
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.notions
            .get(label)
            .map(String::as_str)
            .filter(|d| !d.is_empty())
    }

    pub fn require(&self, label: &str) -> Result<&str> {
        self.get(label)
            .ok_or_else(|| CorpusError::MissingDefinition(label.to_string()))
    }

    pub fn notions(&self) -> impl Iterator<Item = RelationNotion> + '_ {
        self.notions.iter().map(|(k, v)| RelationNotion {
            relation_label: k.clone(),
            description: v.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.notions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notions.is_empty()
    }

    /// Reads a table from disk. `.json` files hold a `{label: definition}`
    /// object; anything else is read as `label<TAB>definition` lines, with
    /// blank lines and `#` comments skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            let notions: BTreeMap<String, String> =
                serde_json::from_str(&text).map_err(|e| CorpusError::Record {
                    line: e.line(),
                    field: "notions".into(),
                    message: e.to_string(),
                })?;
            return Ok(NotionTable { notions });
        }
        Self::parse_tsv(&text)
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut table = NotionTable::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, def) = line.split_once('\t').ok_or_else(|| CorpusError::Record {
                line: i + 1,
                field: "definition".into(),
                message: "expected `label<TAB>definition`".into(),
            })?;
            if def.trim().is_empty() {
                return Err(CorpusError::Record {
                    line: i + 1,
                    field: "definition".into(),
                    message: format!("empty definition for `{label}`"),
                });
            }
            table.insert(label.trim(), def.trim());
        }
        Ok(table)
    }
}

/// What the attribution stage scores against for one instance.
///
/// `spans` are removed together as one unit. An empty `spans` means the
/// whole passage is the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionTarget {
    pub spans: Vec<Span>,
    pub restriction_text: String,
}

/// Picks target spans and the restriction text for an instance.
///
/// - RE: the ordered pair, restricted by the relation definition.
/// - NER: every entity, restricted by the definitions of the entity types
///   present (first-appearance order, space-joined).
/// - TC: no spans, restricted by the topic definitions.
/// - QA: no spans, restricted by the question text verbatim.
pub fn derive_attribution_target(
    inst: &TaskInstance,
    notions: &NotionTable,
) -> Result<AttributionTarget> {
    match inst.task {
        Task::Re => {
            let (e1, e2) = inst.entity_pair().ok_or_else(|| CorpusError::Record {
                line: 0,
                field: "pair".into(),
                message: format!("instance `{}` has no resolvable pair", inst.id),
            })?;
            let relation = inst.relation.as_deref().unwrap_or_default();
            Ok(AttributionTarget {
                spans: vec![e1.span(), e2.span()],
                restriction_text: notions.require(relation)?.to_string(),
            })
        }
        Task::Ner => {
            let mut types: Vec<&str> = Vec::new();
            for e in &inst.entities {
                if !types.contains(&e.entity_type.as_str()) {
                    types.push(&e.entity_type);
                }
            }
            let defs = types
                .iter()
                .map(|t| notions.require(t))
                .collect::<Result<Vec<_>>>()?;
            let mut spans: Vec<Span> = inst.entities.iter().map(|e| e.span()).collect();
            spans.sort();
            Ok(AttributionTarget {
                spans,
                restriction_text: defs.join(" "),
            })
        }
        Task::Tc => {
            let defs = inst
                .topics
                .iter()
                .map(|t| notions.require(t))
                .collect::<Result<Vec<_>>>()?;
            Ok(AttributionTarget {
                spans: Vec::new(),
                restriction_text: defs.join(" "),
            })
        }
        Task::Qa => Ok(AttributionTarget {
            spans: Vec::new(),
            restriction_text: inst.question.clone().unwrap_or_default(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MECHANISM: &str =
        "This type is used to annotate DDIs that are described by their PK mechanism";

    fn ddi() -> TaskInstance {
        TaskInstance::new(
            "ddi-1",
            Task::Re,
            "Grepafloxacin may inhibit the metabolism of theobromine"
                .split(' ')
                .map(String::from)
                .collect(),
        )
        .with_entity(Span::single(0), "DRUG")
        .with_entity(Span::single(6), "DRUG")
        .with_relation(0, 1, "mechanism")
    }

    #[test]
    fn re_target_uses_relation_definition() {
        let notions = NotionTable::new().with("mechanism", MECHANISM);
        let t = derive_attribution_target(&ddi(), &notions).unwrap();
        assert_eq!(t.restriction_text, MECHANISM);
        assert_eq!(t.spans, vec![Span::single(0), Span::single(6)]);
    }

    #[test]
    fn missing_notion_names_label() {
        let err = derive_attribution_target(&ddi(), &NotionTable::new()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingDefinition(ref l) if l == "mechanism"));
    }

    #[test]
    fn tc_target_is_empty_with_topic_definition() {
        let mut inst = TaskInstance::new("t", Task::Tc, vec!["cells".into(), "divide".into()]);
        inst.topics = vec!["proliferation".into()];
        let notions =
            NotionTable::new().with("proliferation", "Sustaining proliferative signaling");
        let t = derive_attribution_target(&inst, &notions).unwrap();
        assert!(t.spans.is_empty());
        assert_eq!(t.restriction_text, "Sustaining proliferative signaling");
    }

    #[test]
    fn qa_target_is_question_verbatim() {
        let mut inst = TaskInstance::new("q", Task::Qa, vec!["yes".into()]);
        inst.question = Some("Does aspirin reduce  fever?".into());
        inst.answer = Some("yes".into());
        let t = derive_attribution_target(&inst, &NotionTable::new()).unwrap();
        assert_eq!(t.restriction_text, "Does aspirin reduce  fever?");
        assert!(t.spans.is_empty());
    }

    #[test]
    fn tsv_table_parses_and_rejects_empty_definitions() {
        let t = NotionTable::parse_tsv("# comment\nmechanism\tPK mechanism\n\nadvise\tadvice\n")
            .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("advise"), Some("advice"));
        assert!(NotionTable::parse_tsv("effect\t  \n").is_err());
    }
}
