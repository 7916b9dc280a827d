use serde::{Deserialize, Serialize};

use super::{ExtractRequest, Extractor, FailingPair, GenerationError, Result, SimilarityMeasure};

pub const DEFAULT_THRESHOLD: f64 = 0.80;
pub const DEFAULT_MAX_ROUNDS: usize = 5;

/// Skeleton string shared by a target sentence and its exemplars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyStructure {
    pub text: String,
    pub rounds: usize,
    /// Similarity to each source (target first), each joined with the
    /// restriction text.
    pub similarities: Vec<f64>,
    /// Set when no round cleared the threshold for every source; `text` is
    /// then the proposal with the highest minimum similarity.
    pub best_effort: bool,
}

impl KeyStructure {
    pub fn min_similarity(&self) -> f64 {
        self.similarities
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn with_restriction(sentence: &str, restriction: &str) -> String {
    if restriction.is_empty() {
        sentence.to_string()
    } else {
        format!("{sentence} {restriction}")
    }
}

/// Runs the extract, measure, re-prompt loop.
///
/// A proposal is accepted once its similarity to every source is strictly
/// above `threshold`. Failing sources are sent back with the next request.
/// After `max_rounds` proposals the best one is returned flagged
/// `best_effort`.
pub fn extract_key_structure(
    target: &str,
    exemplars: &[String],
    restriction: &str,
    extractor: &dyn Extractor,
    measure: &dyn SimilarityMeasure,
    threshold: f64,
    max_rounds: usize,
) -> Result<KeyStructure> {
    if exemplars.is_empty() || max_rounds == 0 {
        return Err(GenerationError::InvalidExtraction);
    }
    let sources: Vec<String> = std::iter::once(target)
        .chain(exemplars.iter().map(String::as_str))
        .map(|s| with_restriction(s, restriction))
        .collect();

    let mut best: Option<KeyStructure> = None;
    let mut failing: Option<Vec<FailingPair>> = None;
    for round in 1..=max_rounds {
        let request = ExtractRequest {
            concatenated_sentences: sources.clone(),
            failing_pairs: failing.take(),
        };
        let text = extractor
            .extract(&request)
            .map_err(|source| GenerationError::Backend {
                backend: extractor.id().to_string(),
                source,
            })?;
        let similarities: Vec<f64> = sources
            .iter()
            .map(|s| measure.similarity(&text, s))
            .collect();
        let proposal = KeyStructure {
            text,
            rounds: round,
            similarities,
            best_effort: false,
        };
        if proposal.similarities.iter().all(|&s| s > threshold) {
            return Ok(proposal);
        }
        failing = Some(
            proposal
                .similarities
                .iter()
                .enumerate()
                .filter(|(_, &s)| s <= threshold)
                .map(|(source_index, &similarity)| FailingPair {
                    source_index,
                    similarity,
                })
                .collect(),
        );
        if best
            .as_ref()
            .is_none_or(|b| proposal.min_similarity() > b.min_similarity())
        {
            best = Some(proposal);
        }
    }
    let mut best = best.expect("at least one round ran");
    best.rounds = max_rounds;
    best.best_effort = true;
    Ok(best)
}
