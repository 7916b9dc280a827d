//! Line-tagged answer formats the agents are asked to follow, and their
//! parsers.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Which debate step a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Discrepancy,
    Aspect,
    Revision,
    Grade,
}

impl Phase {
    pub fn answer_format(&self) -> &'static str {
        match self {
            Phase::Discrepancy => FORMAT_DISCREPANCY,
            Phase::Aspect => FORMAT_ASPECT,
            Phase::Revision => FORMAT_REVISION,
            Phase::Grade => FORMAT_GRADE,
        }
    }

    /// Recovers the phase from a request body by its answer format.
    pub fn detect(user: &str) -> Option<Phase> {
        [
            Phase::Discrepancy,
            Phase::Aspect,
            Phase::Revision,
            Phase::Grade,
        ]
        .into_iter()
        .find(|p| user.contains(p.answer_format()))
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Discrepancy => "discrepancy",
            Phase::Aspect => "aspect",
            Phase::Revision => "revision",
            Phase::Grade => "grade",
        })
    }
}

pub const FORMAT_DISCREPANCY: &str = "Reply with a fenced block only. One line per discrepancy, greatest first; leave a fragment empty for an insertion or deletion:
```
DISCREPANCY: <fragment of the original> || <fragment of the augmented> || <where it occurs>
```";

pub const FORMAT_ASPECT: &str = "Reply with a fenced block only, exactly one line per aspect:
```
ASPECT word_definition: <reasonable|unreasonable> || <rationale>
ASPECT word_similarity: <reasonable|unreasonable> || <rationale>
ASPECT syntax_correctness: <reasonable|unreasonable> || <rationale>
ASPECT usage_example: <reasonable|unreasonable> || <rationale>
```";

pub const FORMAT_REVISION: &str =
    "Reply with a fenced block only, holding the refined augmented sentence on one line:
```
REVISED: <sentence>
```";

pub const FORMAT_GRADE: &str = "Reply with a fenced block only:
```
GRADE: <integer from 0 to 100>
```";

/// Appended to the request when the previous answer did not parse.
pub const REPROMPT_NOTE: &str =
    "Your previous answer could not be parsed. Answer again, following the format exactly.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    WordDefinition,
    WordSimilarity,
    SyntaxCorrectness,
    UsageExample,
}

impl Aspect {
    pub const ALL: [Aspect; 4] = [
        Aspect::WordDefinition,
        Aspect::WordSimilarity,
        Aspect::SyntaxCorrectness,
        Aspect::UsageExample,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Aspect::WordDefinition => "word_definition",
            Aspect::WordSimilarity => "word_similarity",
            Aspect::SyntaxCorrectness => "syntax_correctness",
            Aspect::UsageExample => "usage_example",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Reasonable,
    Unreasonable,
}

/// Lines of `text` that start with `tag`, with the tag removed.
fn tagged<'t>(text: &'t str, tag: &'t str) -> impl Iterator<Item = &'t str> + 't {
    text.lines()
        .filter_map(move |l| l.trim().strip_prefix(tag))
        .map(str::trim)
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// `(fragment in s, fragment in s*, locus)` triples whose fragments occur in
/// their sentences, plus the number of tagged lines dropped.
pub(crate) fn parse_discrepancies(
    text: &str,
    original: &str,
    augmented: &str,
) -> (Vec<(String, String, String)>, usize) {
    let (s, s_star) = (normalize(original), normalize(augmented));
    let mut ok = Vec::new();
    let mut dropped = 0;
    for line in tagged(text, "DISCREPANCY:") {
        let parts: Vec<&str> = line.split("||").map(str::trim).collect();
        let valid = match parts.as_slice() {
            [a, b, _] => {
                !(a.is_empty() && b.is_empty())
                    && s.contains(&normalize(a))
                    && s_star.contains(&normalize(b))
            }
            _ => false,
        };
        if valid {
            ok.push((
                parts[0].to_string(),
                parts[1].to_string(),
                parts[2].to_string(),
            ));
        } else {
            dropped += 1;
        }
    }
    (ok, dropped)
}

/// Verdicts per aspect. Returns the first missing aspect on failure.
pub(crate) fn parse_aspects(text: &str) -> Result<Vec<(Aspect, Verdict, String)>, Aspect> {
    let mut found: Vec<Option<(Verdict, String)>> = vec![None; 4];
    for line in tagged(text, "ASPECT") {
        let Some((name, rest)) = line.split_once(':') else {
            continue;
        };
        let Some(i) = Aspect::ALL.iter().position(|a| a.as_str() == name.trim()) else {
            continue;
        };
        let (verdict, rationale) = rest.split_once("||").unwrap_or((rest, ""));
        let verdict = match verdict.trim().to_lowercase().as_str() {
            "reasonable" => Verdict::Reasonable,
            "unreasonable" => Verdict::Unreasonable,
            _ => continue,
        };
        found[i].get_or_insert((verdict, rationale.trim().to_string()));
    }
    Aspect::ALL
        .iter()
        .zip(found)
        .map(|(a, f)| f.map(|(v, r)| (*a, v, r)).ok_or(*a))
        .collect()
}

pub(crate) fn parse_revision(text: &str) -> Option<String> {
    tagged(text, "REVISED:")
        .find(|l| !l.is_empty())
        .map(str::to_string)
}

/// Grade on `[0, 1]`: the 0 to 100 answer, clamped, divided by 100.
pub(crate) fn parse_grade(text: &str) -> Option<f64> {
    let raw = tagged(text, "GRADE:").next()?;
    let number = raw.split_whitespace().next()?.trim_end_matches(['.', '%']);
    let v: f64 = number.parse().ok()?;
    v.is_finite().then(|| v.clamp(0.0, 100.0) / 100.0)
}
