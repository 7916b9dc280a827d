use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Task;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("template `{template}` needs variable `{variable}` for placeholder `{placeholder}`")]
    MissingVariable {
        template: PromptId,
        placeholder: &'static str,
        variable: &'static str,
    },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
}

/// The prompt templates the debate and the prediction helper use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptId {
    DebateInitial,
    DebateReview,
    DebateRevision,
    TaskAnswer(Task),
    Distinguish,
}

impl PromptId {
    pub const ALL: [PromptId; 8] = [
        PromptId::DebateInitial,
        PromptId::DebateReview,
        PromptId::DebateRevision,
        PromptId::TaskAnswer(Task::Ner),
        PromptId::TaskAnswer(Task::Re),
        PromptId::TaskAnswer(Task::Tc),
        PromptId::TaskAnswer(Task::Qa),
        PromptId::Distinguish,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PromptId::DebateInitial => "debate_initial",
            PromptId::DebateReview => "debate_review",
            PromptId::DebateRevision => "debate_revision",
            PromptId::TaskAnswer(Task::Ner) => "task_answer_ner",
            PromptId::TaskAnswer(Task::Re) => "task_answer_re",
            PromptId::TaskAnswer(Task::Tc) => "task_answer_tc",
            PromptId::TaskAnswer(Task::Qa) => "task_answer_qa",
            PromptId::Distinguish => "distinguish",
        }
    }

    fn source(&self) -> &'static str {
        match self {
            PromptId::DebateInitial => include_str!("templates/debate_initial.txt"),
            PromptId::DebateReview => include_str!("templates/debate_review.txt"),
            PromptId::DebateRevision => include_str!("templates/debate_revision.txt"),
            PromptId::TaskAnswer(Task::Ner) => include_str!("templates/task_answer_ner.txt"),
            PromptId::TaskAnswer(Task::Re) => include_str!("templates/task_answer_re.txt"),
            PromptId::TaskAnswer(Task::Tc) => include_str!("templates/task_answer_tc.txt"),
            PromptId::TaskAnswer(Task::Qa) => include_str!("templates/task_answer_qa.txt"),
            PromptId::Distinguish => include_str!("templates/distinguish.txt"),
        }
    }

    /// `(placeholder, variable)` pairs this template substitutes.
    pub fn placeholders(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            PromptId::DebateInitial => &[
                ("[Insert topic here]", "topic"),
                ("[Required Answer Format]", "answer_format"),
            ],
            PromptId::DebateReview => &[
                ("[Insert topic here]", "topic"),
                ("[Initial Statement]", "initial_statement"),
                ("[Required Answer Format]", "answer_format"),
            ],
            PromptId::DebateRevision => &[
                ("[Reviews]", "reviews"),
                ("[Required Answer Format]", "answer_format"),
            ],
            PromptId::TaskAnswer(Task::Tc) => &[
                (
                    "[Insert categories, e.g., positive/negative, news/sports/entertainment]",
                    "categories",
                ),
                ("[Insert sentence or passage]", "sentence"),
            ],
            PromptId::TaskAnswer(Task::Qa) => &[
                ("[Insert passage]", "passage"),
                ("[Insert question]", "question"),
            ],
            PromptId::TaskAnswer(_) => &[("[Insert sentence or passage]", "sentence")],
            PromptId::Distinguish => {
                &[("[Insert here]", "original"), ("[Inser here]", "augmented")]
            }
        }
    }

    /// Variable names in order of first appearance.
    pub fn variables(&self) -> Vec<&'static str> {
        let mut found: Vec<(usize, &'static str)> = self
            .placeholders()
            .iter()
            .map(|(p, v)| (self.source().find(p).expect("placeholder in template"), *v))
            .collect();
        found.sort();
        found.into_iter().map(|(_, v)| v).collect()
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

pub type PromptVars = BTreeMap<String, String>;

/// A rendered template split into its task header and body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub header: String,
    pub body: String,
}

impl RenderedPrompt {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.header, self.body)
    }
}

/// Substitutes `vars` into template `id`.
///
/// Every placeholder needs a non-blank value; the first one lacking it, in
/// template order, is reported. Substitution is a single left-to-right pass,
/// so values that happen to look like placeholders are left alone.
pub fn render_prompt(id: PromptId, vars: &PromptVars) -> Result<RenderedPrompt, PromptError> {
    let src = id.source();
    let mut occurrences: Vec<(usize, &'static str, &'static str)> = Vec::new();
    for &(placeholder, variable) in id.placeholders() {
        occurrences.extend(
            src.match_indices(placeholder)
                .map(|(at, _)| (at, placeholder, variable)),
        );
    }
    occurrences.sort();

    let mut out = String::with_capacity(src.len() + 256);
    let mut cursor = 0;
    for (at, placeholder, variable) in occurrences {
        let value = vars.get(variable).filter(|v| !v.trim().is_empty()).ok_or(
            PromptError::MissingVariable {
                template: id,
                placeholder,
                variable,
            },
        )?;
        out.push_str(&src[cursor..at]);
        out.push_str(value);
        cursor = at + placeholder.len();
    }
    out.push_str(&src[cursor..]);

    let (header, body) = out
        .split_once("\n\n")
        .expect("templates start with a header line");
    Ok(RenderedPrompt {
        header: header.to_string(),
        body: body.trim_end_matches('\n').to_string(),
    })
}

/// Convenience for building [`PromptVars`] from pairs.
pub fn vars<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> PromptVars {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
