use std::collections::{BTreeMap, HashMap};

use parking_lot::Mutex;

use super::{
    Anchors, AttributionError, AttributionMap, MapKind, MapStatus, Result, ScoreRequest, Scorer,
    ScorerKind,
};
use crate::backend::fingerprint;
use crate::corpus::Span;

/// Memoizing front for a [`Scorer`]: each distinct request reaches the
/// backend once per `LooScorer`.
///
/// Safe to share between threads; one instance is meant to live for a run.
pub struct LooScorer<'a> {
    scorer: &'a dyn Scorer,
    memo: Mutex<HashMap<ScoreRequest, f64>>,
}

impl<'a> LooScorer<'a> {
    pub fn new(scorer: &'a dyn Scorer) -> Self {
        LooScorer {
            scorer,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn kind(&self) -> ScorerKind {
        self.scorer.kind()
    }

    pub fn id(&self) -> &str {
        self.scorer.id()
    }

    /// Score of a (possibly reduced) sequence.
    pub fn loo_score(&self, sequence: Vec<String>, restriction: Option<&str>) -> Result<f64> {
        let request = ScoreRequest {
            sequence,
            restriction_text: restriction.map(str::to_string),
            kind: self.scorer.kind(),
        };
        if let Some(&v) = self.memo.lock().get(&request) {
            return Ok(v);
        }
        let v = self
            .scorer
            .score(&request)
            .map_err(|source| AttributionError::Backend {
                fingerprint: fingerprint(self.scorer.id(), &request, None)[..16].to_string(),
                source,
            })?;
        self.memo.lock().insert(request, v);
        Ok(v)
    }

    /// Number of distinct requests sent to the backend so far.
    pub fn distinct_requests(&self) -> usize {
        self.memo.lock().len()
    }

    /// The distinct sequences scored so far, in no particular order.
    pub fn sequences(&self) -> Vec<Vec<String>> {
        self.memo
            .lock()
            .keys()
            .map(|r| r.sequence.clone())
            .collect()
    }
}

fn check_target(len: usize, target: &[Span]) -> Result<()> {
    for (i, span) in target.iter().enumerate() {
        if span.start > span.end || span.end >= len {
            return Err(AttributionError::InvalidSpan { span: *span, len });
        }
        if let Some(other) = target[..i].iter().find(|o| o.overlaps(span)) {
            return Err(AttributionError::OverlappingTargets(*other, *span));
        }
    }
    Ok(())
}

fn in_target(target: &[Span], i: usize) -> bool {
    target.iter().any(|s| s.contains(i))
}

// `tokens` with the target spans (and optionally one more index) removed.
// An empty target stands for the whole passage.
fn without(tokens: &[String], target: &[Span], extra: Option<usize>) -> Vec<String> {
    if target.is_empty() {
        return Vec::new();
    }
    tokens
        .iter()
        .enumerate()
        .filter(|&(i, _)| !in_target(target, i) && Some(i) != extra)
        .map(|(_, t)| t.clone())
        .collect()
}

fn without_index(tokens: &[String], skip: usize) -> Vec<String> {
    tokens
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, t)| t.clone())
        .collect()
}

fn removal_map(
    kind: MapKind,
    tokens: &[String],
    target: &[Span],
    restriction: Option<&str>,
    scorer: &LooScorer<'_>,
) -> Result<AttributionMap> {
    check_target(tokens.len(), target)?;
    let candidates: Vec<usize> = (0..tokens.len())
        .filter(|&i| !in_target(target, i))
        .collect();
    if candidates.len() < 2 {
        return Err(AttributionError::NoCandidates {
            candidates: candidates.len(),
        });
    }

    let full = scorer.loo_score(tokens.to_vec(), restriction)?;
    let without_target = scorer.loo_score(without(tokens, target, None), restriction)?;
    let attr_target = full - without_target;

    let mut entries = BTreeMap::new();
    for &w in &candidates {
        let minus_w = scorer.loo_score(without_index(tokens, w), restriction)?;
        let minus_both = scorer.loo_score(without(tokens, target, Some(w)), restriction)?;
        let attr_target_minus_w = minus_w - minus_both;
        entries.insert(w, attr_target - attr_target_minus_w);
    }

    Ok(AttributionMap {
        kind,
        entries,
        target: target.to_vec(),
        status: MapStatus::Raw,
        anchors: Anchors {
            full_sentence: full,
            without_target,
            reference: None,
        },
    })
}

/// Lexicon contribution map of every non-target token toward `target`.
///
/// Needs a task-logit scorer and at least two candidate tokens.
pub fn attr_lexicon(
    tokens: &[String],
    target: &[Span],
    scorer: &LooScorer<'_>,
) -> Result<AttributionMap> {
    if scorer.kind() != ScorerKind::TaskLogit {
        return Err(AttributionError::WrongScorerKind {
            expected: ScorerKind::TaskLogit,
            found: scorer.kind(),
        });
    }
    removal_map(MapKind::Lexicon, tokens, target, None, scorer)
}

/// Relation contribution map: how much each non-target token contributes to
/// the relativity between the sentence and `restriction`.
pub fn attr_bio(
    tokens: &[String],
    target: &[Span],
    restriction: &str,
    scorer: &LooScorer<'_>,
) -> Result<AttributionMap> {
    if scorer.kind() != ScorerKind::InferenceRelativity {
        return Err(AttributionError::WrongScorerKind {
            expected: ScorerKind::InferenceRelativity,
            found: scorer.kind(),
        });
    }
    if restriction.trim().is_empty() {
        return Err(AttributionError::MissingRestriction);
    }
    removal_map(MapKind::Relation, tokens, target, Some(restriction), scorer)
}

/// Contribution between the two entities of a pair, the larger of the two
/// directions.
///
/// `attr(e1 <- e2) = attr(e1) - attr(e1 \ e2)` with the same removal algebra
/// as the lexicon map; both directions expand to
/// `attr(s) - attr(s\e1) - attr(s\e2) + attr(s\{e1,e2})`, so they agree up to
/// rounding.
pub fn pair_contribution(
    tokens: &[String],
    e1: Span,
    e2: Span,
    scorer: &LooScorer<'_>,
) -> Result<f64> {
    check_target(tokens.len(), &[e1, e2])?;
    let full = scorer.loo_score(tokens.to_vec(), None)?;
    let minus_1 = scorer.loo_score(without(tokens, &[e1], None), None)?;
    let minus_2 = scorer.loo_score(without(tokens, &[e2], None), None)?;
    let minus_both = scorer.loo_score(without(tokens, &[e1, e2], None), None)?;
    let one_from_two = (full - minus_1) - (minus_2 - minus_both);
    let two_from_one = (full - minus_2) - (minus_1 - minus_both);
    Ok(one_from_two.max(two_from_one))
}
