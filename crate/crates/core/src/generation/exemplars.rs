use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GenerationError, Result};
use crate::corpus::{Task, TaskInstance};

/// What an exemplar has to share with the target instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExemplarQuery {
    pub task: Task,
    /// Instance to leave out (the target itself).
    pub exclude_id: Option<String>,
    /// Same-label key: the relation for RE, the sorted topics for TC, the
    /// sorted entity types for NER; empty for QA.
    pub label: String,
    /// Entity surfaces that define an exact match (the RE pair in order, or
    /// the NER surfaces); empty when the task has no exact tier.
    pub surfaces: Vec<String>,
}

fn label_of(inst: &TaskInstance) -> String {
    match inst.task {
        Task::Re => inst.relation.clone().unwrap_or_default(),
        Task::Tc => {
            let mut t = inst.topics.clone();
            t.sort();
            t.join(";")
        }
        Task::Ner => {
            let mut t: Vec<String> = inst
                .entities
                .iter()
                .map(|e| e.entity_type.clone())
                .collect();
            t.sort();
            t.dedup();
            t.join(";")
        }
        Task::Qa => String::new(),
    }
}

fn surfaces_of(inst: &TaskInstance) -> Vec<String> {
    match inst.task {
        Task::Re => inst
            .entity_pair()
            .map(|(a, b)| vec![a.surface.clone(), b.surface.clone()])
            .unwrap_or_default(),
        Task::Ner => inst.entities.iter().map(|e| e.surface.clone()).collect(),
        Task::Tc | Task::Qa => Vec::new(),
    }
}

impl ExemplarQuery {
    pub fn for_instance(inst: &TaskInstance) -> Self {
        ExemplarQuery {
            task: inst.task,
            exclude_id: Some(inst.id.clone()),
            label: label_of(inst),
            surfaces: surfaces_of(inst),
        }
    }
}

/// Samples up to `k` same-label instances.
///
/// Exact matches (same entity surfaces, same label) come first, then other
/// same-label instances; each tier is shuffled with a seeded RNG. Fewer than
/// `k` are returned when the dataset has fewer candidates.
pub fn sample_similar<'d>(
    dataset: &'d [TaskInstance],
    query: &ExemplarQuery,
    k: usize,
    seed: u64,
) -> Result<Vec<&'d TaskInstance>> {
    if k < 1 {
        return Err(GenerationError::InvalidK);
    }
    let mut exact = Vec::new();
    let mut same_label = Vec::new();
    for inst in dataset {
        if inst.task != query.task
            || query.exclude_id.as_deref() == Some(inst.id.as_str())
            || label_of(inst) != query.label
        {
            continue;
        }
        if !query.surfaces.is_empty() && surfaces_of(inst) == query.surfaces {
            exact.push(inst);
        } else {
            same_label.push(inst);
        }
    }
    if exact.is_empty() && same_label.is_empty() {
        return Err(GenerationError::NoExemplars(query.label.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    exact.shuffle(&mut rng);
    same_label.shuffle(&mut rng);
    Ok(exact.into_iter().chain(same_label).take(k).collect())
}
