use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{Dataset, Task, TaskInstance};

/// One broken invariant on one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, message: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(message))
    }

    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation::new(field, message));
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{}: {}", v.field, v.message))
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks the per-instance invariants. Parent resolution needs the whole
/// dataset, so it is done by [`validate_dataset`]; on a lone instance only an
/// empty or self-referencing parent id is reported.
pub fn validate_instance(inst: &TaskInstance) -> ValidationReport {
    check(inst, None)
}

/// Validates every instance, including that augmented instances point at a
/// parent present in the same dataset. Reports are returned only for
/// instances that have violations, keyed by position.
pub fn validate_dataset(ds: &Dataset) -> Vec<(usize, ValidationReport)> {
    let ids: HashSet<&str> = ds.iter().map(|i| i.id.as_str()).collect();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (pos, inst) in ds.iter().enumerate() {
        let mut report = check(inst, Some(&ids));
        if !seen.insert(inst.id.as_str()) {
            report.push("id", format!("duplicate id `{}`", inst.id));
        }
        if !report.is_empty() {
            out.push((pos, report));
        }
    }
    out
}

fn check(inst: &TaskInstance, ids: Option<&HashSet<&str>>) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n = inst.tokens.len();

    if inst.id.is_empty() {
        r.push("id", "empty id");
    }
    if n == 0 {
        r.push("tokens", "empty token sequence");
    }
    for (i, t) in inst.tokens.iter().enumerate() {
        if t.text.is_empty() {
            r.push("tokens", format!("token {i} is empty"));
        }
        if t.text.chars().any(char::is_whitespace) {
            r.push("tokens", format!("token {i} contains whitespace"));
        }
        if t.index != i {
            r.push("tokens", format!("token {i} has index {}", t.index));
        }
    }

    for (k, e) in inst.entities.iter().enumerate() {
        let field = format!("entities[{k}]");
        if e.start > e.end {
            r.push(&field, "span start after end");
            continue;
        }
        if e.end >= n {
            r.push(&field, "span out of bounds");
            continue;
        }
        if e.entity_type.is_empty() {
            r.push(&field, "empty entity type");
        }
        let joined = inst.tokens[e.start..=e.end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        if joined != e.surface {
            r.push(
                &field,
                format!(
                    "surface `{}` does not match span text `{joined}`",
                    e.surface
                ),
            );
        }
    }

    match inst.task {
        Task::Ner => {}
        Task::Re => {
            match inst.pair {
                None => r.push("pair", "RE instance needs an entity pair"),
                Some([a, b]) => {
                    if a >= inst.entities.len() || b >= inst.entities.len() {
                        r.push("pair", "pair index out of range");
                    } else if a == b {
                        r.push("pair", "pair refers to the same entity twice");
                    } else if inst.entities[a].span().overlaps(&inst.entities[b].span()) {
                        r.push("pair", "pair entities overlap");
                    }
                }
            }
            if inst.relation.as_deref().is_none_or(str::is_empty) {
                r.push("relation", "RE instance needs a relation label");
            }
        }
        Task::Tc => {
            if inst.topics.is_empty() || inst.topics.iter().any(String::is_empty) {
                r.push("topics", "TC instance needs a topic");
            }
        }
        Task::Qa => {
            if inst.question.as_deref().is_none_or(str::is_empty) {
                r.push("question", "QA instance needs a question");
            }
            if inst.answer.as_deref().is_none_or(str::is_empty) {
                r.push("answer", "QA instance needs an answer");
            }
        }
    }
    if inst.task != Task::Re && (inst.pair.is_some() || inst.relation.is_some()) {
        r.push("pair", format!("{} instance carries RE labels", inst.task));
    }

    if let Some(parent) = inst.parent_id() {
        if parent.is_empty() || parent == inst.id {
            r.push("provenance", "unresolved parent");
        } else if let Some(ids) = ids {
            if !ids.contains(parent) {
                r.push("provenance", format!("unresolved parent `{parent}`"));
            }
        }
    }
    r
}
