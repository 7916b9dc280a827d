//! Deterministic in-process backends: scorers, generators, extractors and
//! scripted agents. They define the backend contracts for tests and let the
//! whole pipeline run without a model server.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::attribution::{unescape_token, ScoreRequest, Scorer, ScorerKind, MASK_SENTINEL};
use crate::backend::BackendError;
use crate::corpus::TaskInstance;
use crate::generation::{similarity, ExtractRequest, Extractor, Generator, InfillRequest};
use crate::reflection::{Agent, Aspect, ChatRequest, Phase};

fn fnv(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.iter().chain(&[0xff]) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Uniform value in `[0, 1)` keyed on `salt` and the strings.
fn unit(salt: u64, words: &[&str]) -> f64 {
    let salt = salt.to_le_bytes();
    let mut parts: Vec<&[u8]> = vec![&salt];
    parts.extend(words.iter().map(|w| w.as_bytes()));
    (fnv(&parts) >> 11) as f64 / (1u64 << 53) as f64
}

fn restriction_words(r: &ScoreRequest) -> Vec<String> {
    r.restriction_text
        .as_deref()
        .unwrap_or("")
        .split_whitespace()
        .map(str::to_lowercase)
        .collect()
}

/// Sum of per-token weights in `[0.1, 1.1)`.
///
/// As an inference-relativity scorer, tokens that also occur in the
/// restriction text count double.
#[derive(Debug, Clone)]
pub struct AdditiveScorer {
    pub kind: ScorerKind,
    pub salt: u64,
}

impl AdditiveScorer {
    pub fn new(kind: ScorerKind, salt: u64) -> Self {
        AdditiveScorer { kind, salt }
    }

    pub fn weight(&self, token: &str) -> f64 {
        0.1 + unit(self.salt, &[token])
    }

    fn additive(&self, r: &ScoreRequest) -> f64 {
        let restriction = restriction_words(r);
        r.sequence
            .iter()
            .map(|t| {
                let boost = if restriction.contains(&t.to_lowercase()) {
                    2.0
                } else {
                    1.0
                };
                self.weight(t) * boost
            })
            .sum()
    }
}

impl Scorer for AdditiveScorer {
    fn id(&self) -> &str {
        "mock-additive"
    }
    fn kind(&self) -> ScorerKind {
        self.kind
    }
    fn score(&self, r: &ScoreRequest) -> Result<f64, BackendError> {
        Ok(self.additive(r))
    }
}

/// Additive scorer plus a bonus for some co-occurring token pairs, so that
/// removing one token changes the contribution of another.
#[derive(Debug, Clone)]
pub struct PairwiseScorer {
    pub base: AdditiveScorer,
    /// Share of token pairs that carry a bonus.
    pub density: f64,
}

impl PairwiseScorer {
    pub fn new(kind: ScorerKind, salt: u64, density: f64) -> Self {
        PairwiseScorer {
            base: AdditiveScorer::new(kind, salt),
            density,
        }
    }

    /// Bonus for the unordered pair, zero for most pairs.
    pub fn bonus(&self, a: &str, b: &str) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let salt = self.base.salt ^ 0x9e37_79b9_7f4a_7c15;
        if unit(salt, &[a, b]) < self.density {
            2.0 * unit(salt.rotate_left(17), &[a, b])
        } else {
            0.0
        }
    }
}

impl Scorer for PairwiseScorer {
    fn id(&self) -> &str {
        "mock-pairwise"
    }
    fn kind(&self) -> ScorerKind {
        self.base.kind
    }
    fn score(&self, r: &ScoreRequest) -> Result<f64, BackendError> {
        let seq = &r.sequence;
        let mut total = self.base.additive(r);
        for i in 0..seq.len() {
            for j in i + 1..seq.len() {
                total += self.bonus(&seq[i], &seq[j]);
            }
        }
        Ok(total)
    }
}

#[derive(Debug, Clone)]
pub struct ConstantScorer {
    pub kind: ScorerKind,
    pub value: f64,
}

impl Scorer for ConstantScorer {
    fn id(&self) -> &str {
        "mock-constant"
    }
    fn kind(&self) -> ScorerKind {
        self.kind
    }
    fn score(&self, _: &ScoreRequest) -> Result<f64, BackendError> {
        Ok(self.value)
    }
}

/// Splits generator template tokens into slots and `(type, surface)` pairs.
fn parse_template(tokens: &[String]) -> (Vec<Option<String>>, Vec<(String, String)>) {
    let mut parts = tokens.split(|t| t == "|");
    let slots = parts
        .next()
        .unwrap_or_default()
        .iter()
        .map(|t| (t != MASK_SENTINEL).then(|| unescape_token(t)))
        .collect();
    let entities = parts
        .filter_map(|part| {
            let ty = part.first()?.strip_prefix("<s:")?.strip_suffix('>')?;
            let body = &part[1..part.len().saturating_sub(1)];
            let surface: Vec<String> = body.iter().map(|t| unescape_token(t)).collect();
            Some((ty.to_string(), surface.join(" ")))
        })
        .collect();
    (slots, entities)
}

/// Sentences a template-matching generator can fill from.
#[derive(Debug, Clone, Default)]
struct SentenceIndex {
    by_len: HashMap<usize, Vec<TaskInstance>>,
}

impl SentenceIndex {
    fn new(dataset: &[TaskInstance]) -> Self {
        let mut by_len: HashMap<usize, Vec<TaskInstance>> = HashMap::new();
        for inst in dataset {
            by_len
                .entry(inst.tokens.len())
                .or_default()
                .push(inst.clone());
        }
        SentenceIndex { by_len }
    }

    fn lookup(&self, slots: &[Option<String>]) -> Option<&TaskInstance> {
        self.by_len.get(&slots.len())?.iter().find(|inst| {
            slots
                .iter()
                .zip(&inst.tokens)
                .all(|(s, t)| s.as_ref().is_none_or(|s| *s == t.text))
        })
    }
}

/// Fills `tokens` into output with markers around the template's entities.
fn with_markers(
    id: &str,
    inst: &TaskInstance,
    tokens: Vec<String>,
    entities: &[(String, String)],
) -> Result<Vec<String>, BackendError> {
    let mut opens: HashMap<usize, String> = HashMap::new();
    let mut closes: HashMap<usize, String> = HashMap::new();
    for (ty, surface) in entities {
        let m = inst
            .entities
            .iter()
            .find(|m| {
                m.entity_type == *ty && m.surface == *surface && !opens.contains_key(&m.start)
            })
            .ok_or_else(|| {
                BackendError::permanent(id, format!("entity `{surface}` not in sentence"))
            })?;
        opens.insert(m.start, ty.clone());
        closes.insert(m.end, ty.clone());
    }
    let mut out = Vec::with_capacity(tokens.len() + 2 * entities.len());
    for (i, t) in tokens.into_iter().enumerate() {
        if let Some(ty) = opens.get(&i) {
            out.push(format!("<s:{ty}>"));
        }
        out.push(t);
        if let Some(ty) = closes.get(&i) {
            out.push(format!("</s:{ty}>"));
        }
    }
    Ok(out)
}

/// Reconstructs the source sentence of a template.
///
/// Built over the dataset being augmented; every masked slot gets its
/// original token back, so the pipeline reproduces its input.
#[derive(Debug, Clone)]
pub struct IdentityGenerator {
    index: SentenceIndex,
}

impl IdentityGenerator {
    pub fn from_dataset(dataset: &[TaskInstance]) -> Self {
        IdentityGenerator {
            index: SentenceIndex::new(dataset),
        }
    }
}

impl Generator for IdentityGenerator {
    fn id(&self) -> &str {
        "mock-identity"
    }
    fn infill(&self, r: &InfillRequest) -> Result<Vec<String>, BackendError> {
        let (slots, entities) = parse_template(&r.template_tokens);
        let inst = self.index.lookup(&slots).ok_or_else(|| {
            BackendError::permanent(self.id(), "no sentence matches the template")
        })?;
        with_markers(self.id(), inst, inst.token_texts(), &entities)
    }
}

const SYNONYMS: &[(&str, &[&str])] = &[
    ("administration", &["use", "delivery"]),
    ("associated", &["linked", "correlated"]),
    ("caused", &["induced", "produced"]),
    ("concentration", &["level"]),
    ("daily", &["everyday"]),
    ("decreased", &["reduced", "lowered"]),
    ("dose", &["amount", "quantity"]),
    ("effect", &["impact", "influence"]),
    ("effects", &["impacts"]),
    ("increased", &["raised", "elevated"]),
    ("induced", &["caused", "triggered"]),
    ("levels", &["amounts"]),
    ("observed", &["seen", "noted"]),
    ("patients", &["subjects", "individuals"]),
    ("reduced", &["lowered", "decreased"]),
    ("reduces", &["lowers", "decreases"]),
    ("risk", &["likelihood"]),
    ("severe", &["serious", "marked"]),
    ("showed", &["revealed", "demonstrated"]),
    ("significant", &["marked", "notable"]),
    ("study", &["trial", "investigation"]),
    ("treated", &["managed"]),
    ("treatment", &["therapy"]),
];

/// Like [`IdentityGenerator`], but swaps masked tokens for a synonym when
/// the table has one. The choice among synonyms depends on the seed.
#[derive(Debug, Clone)]
pub struct SynonymGenerator {
    index: SentenceIndex,
}

impl SynonymGenerator {
    pub fn from_dataset(dataset: &[TaskInstance]) -> Self {
        SynonymGenerator {
            index: SentenceIndex::new(dataset),
        }
    }

    pub fn synonyms(word: &str) -> &'static [&'static str] {
        SYNONYMS
            .binary_search_by(|(w, _)| w.cmp(&word))
            .map(|i| SYNONYMS[i].1)
            .unwrap_or(&[])
    }
}

impl Generator for SynonymGenerator {
    fn id(&self) -> &str {
        "mock-synonym"
    }
    fn infill(&self, r: &InfillRequest) -> Result<Vec<String>, BackendError> {
        let (slots, entities) = parse_template(&r.template_tokens);
        let inst = self.index.lookup(&slots).ok_or_else(|| {
            BackendError::permanent(self.id(), "no sentence matches the template")
        })?;
        let tokens = inst
            .tokens
            .iter()
            .zip(&slots)
            .enumerate()
            .map(|(i, (t, slot))| {
                let options = Self::synonyms(&t.text);
                if slot.is_some() || options.is_empty() {
                    return t.text.clone();
                }
                let pick = fnv(&[&r.seed.to_le_bytes(), &i.to_le_bytes()]) as usize % options.len();
                options[pick].to_string()
            })
            .collect();
        with_markers(self.id(), inst, tokens, &entities)
    }
}

/// Proposes the first source (the target joined with its restriction).
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoExtractor;

impl Extractor for EchoExtractor {
    fn id(&self) -> &str {
        "mock-echo"
    }
    fn extract(&self, r: &ExtractRequest) -> Result<String, BackendError> {
        r.concatenated_sentences
            .first()
            .cloned()
            .ok_or_else(|| BackendError::permanent(self.id(), "no sentences"))
    }
}

/// Proposes the source closest to all others: the one with the highest
/// minimum token-LCS similarity, ties to the earlier source.
#[derive(Debug, Clone, Copy, Default)]
pub struct MedoidExtractor;

impl Extractor for MedoidExtractor {
    fn id(&self) -> &str {
        "mock-medoid"
    }
    fn extract(&self, r: &ExtractRequest) -> Result<String, BackendError> {
        let s = &r.concatenated_sentences;
        let score = |i: usize| {
            (0..s.len())
                .filter(|&j| j != i)
                .map(|j| similarity(&s[i], &s[j]))
                .fold(f64::INFINITY, f64::min)
        };
        (0..s.len())
            .map(|i| (i, score(i)))
            .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((i, v)),
            })
            .map(|(i, _)| s[i].clone())
            .ok_or_else(|| BackendError::permanent(self.id(), "no sentences"))
    }
}

/// Returns its proposals in order, repeating the last one, and records each
/// request.
#[derive(Debug, Default)]
pub struct ScriptedExtractor {
    proposals: Vec<String>,
    calls: Mutex<Vec<ExtractRequest>>,
}

impl ScriptedExtractor {
    pub fn new<S: Into<String>>(proposals: impl IntoIterator<Item = S>) -> Self {
        ScriptedExtractor {
            proposals: proposals.into_iter().map(Into::into).collect(),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ExtractRequest> {
        self.calls.lock().clone()
    }
}

impl Extractor for ScriptedExtractor {
    fn id(&self) -> &str {
        "mock-scripted-extractor"
    }
    fn extract(&self, r: &ExtractRequest) -> Result<String, BackendError> {
        let mut calls = self.calls.lock();
        calls.push(r.clone());
        let i = (calls.len() - 1).min(self.proposals.len().saturating_sub(1));
        self.proposals
            .get(i)
            .cloned()
            .ok_or_else(|| BackendError::permanent(self.id(), "empty script"))
    }
}

/// Text between the curly quotes following `label`.
fn quoted_after<'t>(text: &'t str, label: &str) -> Option<&'t str> {
    let rest = &text[text.find(label)? + label.len()..];
    let rest = rest.strip_prefix('‘')?;
    Some(&rest[..rest.find('’')?])
}

/// Shortest window where two sentences differ, as `(in a, in b)`.
pub fn token_diff(a: &str, b: &str) -> (String, String) {
    let ta: Vec<&str> = a.split_whitespace().collect();
    let tb: Vec<&str> = b.split_whitespace().collect();
    let prefix = ta.iter().zip(&tb).take_while(|(x, y)| x == y).count();
    let max_suffix = ta.len().min(tb.len()) - prefix;
    let suffix = ta
        .iter()
        .rev()
        .zip(tb.iter().rev())
        .take(max_suffix)
        .take_while(|(x, y)| x == y)
        .count();
    (
        ta[prefix..ta.len() - suffix].join(" "),
        tb[prefix..tb.len() - suffix].join(" "),
    )
}

/// How a scripted judge revises.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RevisionRule {
    /// Returns the sentence unchanged.
    Keep,
    /// Replaces every whole-token occurrence of `from` with `to`.
    Replace { from: String, to: String },
    /// Returns a fixed sentence.
    Fixed(String),
}

/// Behavior shared by a team of scripted agents.
#[derive(Debug)]
pub struct Script {
    /// Grade (0 to 100) every grader gives in iteration `i`; the last entry
    /// repeats.
    pub grades: Vec<u32>,
    /// Aspect every reviewer marks unreasonable.
    pub flagged: Option<Aspect>,
    pub revision: RevisionRule,
    /// Answer every discrepancy request with unparseable text.
    pub garbled_reviews: bool,
    graders: usize,
    grade_calls: AtomicUsize,
    calls: Mutex<Vec<(String, Phase)>>,
}

impl Script {
    /// `graders` is the number of grades per iteration, one less than the
    /// team size.
    pub fn new(grades: Vec<u32>, graders: usize) -> Self {
        Script {
            grades,
            flagged: None,
            revision: RevisionRule::Keep,
            garbled_reviews: false,
            graders: graders.max(1),
            grade_calls: AtomicUsize::new(0),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// `(agent id, phase)` of every request so far.
    pub fn calls(&self) -> Vec<(String, Phase)> {
        self.calls.lock().clone()
    }

    fn next_grade(&self) -> u32 {
        let iteration = self.grade_calls.fetch_add(1, Ordering::SeqCst) / self.graders;
        let i = iteration.min(self.grades.len().saturating_sub(1));
        self.grades.get(i).copied().unwrap_or(100)
    }
}

/// An agent answering from a shared [`Script`].
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    id: String,
    script: Arc<Script>,
}

impl ScriptedAgent {
    /// A team of `n` agents sharing one script.
    pub fn team(n: usize, script: Script) -> (Vec<ScriptedAgent>, Arc<Script>) {
        let script = Arc::new(script);
        let team = (0..n)
            .map(|i| ScriptedAgent {
                id: format!("agent-{}", i + 1),
                script: Arc::clone(&script),
            })
            .collect();
        (team, script)
    }

    /// `n` agents that find no fault and grade 100.
    pub fn always_pass(n: usize) -> Vec<ScriptedAgent> {
        Self::team(n, Script::new(vec![100], n.saturating_sub(1))).0
    }

    fn discrepancy(&self, user: &str) -> String {
        let (Some(s), Some(s_star)) = (
            quoted_after(user, "original sentence "),
            quoted_after(user, "augmented sentence "),
        ) else {
            return "nothing to compare".into();
        };
        let (a, b) = token_diff(s, s_star);
        format!("```\nDISCREPANCY: {a} || {b} || changed span\n```")
    }

    fn aspects(&self) -> String {
        let lines: Vec<String> = Aspect::ALL
            .iter()
            .map(|a| {
                let verdict = if self.script.flagged == Some(*a) {
                    "unreasonable"
                } else {
                    "reasonable"
                };
                format!("ASPECT {a}: {verdict} || scripted")
            })
            .collect();
        format!("```\n{}\n```", lines.join("\n"))
    }

    fn revision(&self, user: &str) -> String {
        let current = quoted_after(user, "Augmented sentence: ").unwrap_or_default();
        let revised = match &self.script.revision {
            RevisionRule::Keep => current.to_string(),
            RevisionRule::Replace { from, to } => current
                .split_whitespace()
                .map(|t| if t == from { to.as_str() } else { t })
                .collect::<Vec<_>>()
                .join(" "),
            RevisionRule::Fixed(s) => s.clone(),
        };
        format!("```\nREVISED: {revised}\n```")
    }
}

impl Agent for ScriptedAgent {
    fn id(&self) -> &str {
        &self.id
    }
    fn chat(&self, r: &ChatRequest) -> Result<String, BackendError> {
        let phase = r.phase().ok_or_else(|| {
            BackendError::permanent(&self.id, "request has no known answer format")
        })?;
        self.script.calls.lock().push((self.id.clone(), phase));
        Ok(match phase {
            Phase::Discrepancy if self.script.garbled_reviews => "I cannot say.".into(),
            Phase::Discrepancy => self.discrepancy(&r.user),
            Phase::Aspect => self.aspects(),
            Phase::Revision => self.revision(&r.user),
            Phase::Grade => format!("```\nGRADE: {}\n```", self.script.next_grade()),
        })
    }
}
