use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{Task, TaskInstance};

/// Relation labels meaning "no relation"; they never count as positives.
pub const NEGATIVE_RELATIONS: &[&str] = &["false", "none", "no_relation", "negative", "other"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2 TP / (2 TP + FP + FN)`; 1 when there is nothing to find and nothing
    /// was predicted.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

fn ratio(num: u64, denom: u64) -> f64 {
    if denom == 0 {
        1.0
    } else {
        num as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub task: Task,
    /// `entity_f1`, `micro_f1`, `average_micro_f1` or `accuracy`.
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    pub instances: usize,
}

/// Pairs every gold instance with its prediction by id.
fn align<'a>(
    gold: &'a [TaskInstance],
    predictions: &'a [TaskInstance],
) -> Result<Vec<(&'a TaskInstance, &'a TaskInstance)>, PipelineError> {
    let by_id: BTreeMap<&str, &TaskInstance> =
        predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    let missing: Vec<String> = gold
        .iter()
        .filter(|g| !by_id.contains_key(g.id.as_str()))
        .map(|g| g.id.clone())
        .collect();
    let extra: Vec<String> = by_id
        .keys()
        .filter(|id| !gold_ids.contains(*id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(PipelineError::IdMismatch { missing, extra });
    }
    Ok(gold.iter().map(|g| (g, by_id[g.id.as_str()])).collect())
}

/// Exact `(start, end, type)` matches, summed over instances.
pub fn entity_confusion(pairs: &[(&TaskInstance, &TaskInstance)]) -> Confusion {
    let mut c = Confusion::default();
    for (g, p) in pairs {
        let gold: BTreeSet<_> = g
            .entities
            .iter()
            .map(|e| (e.start, e.end, &e.entity_type))
            .collect();
        let pred: BTreeSet<_> = p
            .entities
            .iter()
            .map(|e| (e.start, e.end, &e.entity_type))
            .collect();
        let hit = gold.intersection(&pred).count() as u64;
        c.tp += hit;
        c.fp += pred.len() as u64 - hit;
        c.fn_ += gold.len() as u64 - hit;
    }
    c
}

fn is_negative(label: Option<&str>) -> bool {
    match label {
        None => true,
        Some(l) => NEGATIVE_RELATIONS.contains(&l.to_ascii_lowercase().as_str()),
    }
}

/// Micro counts over positive relation labels. A wrong positive label is
/// one false positive and one false negative.
pub fn relation_confusion(pairs: &[(&TaskInstance, &TaskInstance)]) -> Confusion {
    let mut c = Confusion::default();
    for (g, p) in pairs {
        let (gl, pl) = (g.relation.as_deref(), p.relation.as_deref());
        let (g_pos, p_pos) = (!is_negative(gl), !is_negative(pl));
        if g_pos && p_pos && gl == pl {
            c.tp += 1;
            continue;
        }
        if p_pos {
            c.fp += 1;
        }
        if g_pos {
            c.fn_ += 1;
        }
    }
    c
}

/// Mean over instances of the F1 between gold and predicted topic sets.
pub fn average_topic_f1(pairs: &[(&TaskInstance, &TaskInstance)]) -> f64 {
    if pairs.is_empty() {
        return 1.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|(g, p)| {
            let gold: BTreeSet<&String> = g.topics.iter().collect();
            let pred: BTreeSet<&String> = p.topics.iter().collect();
            let tp = gold.intersection(&pred).count() as u64;
            Confusion {
                tp,
                fp: pred.len() as u64 - tp,
                fn_: gold.len() as u64 - tp,
            }
            .f1()
        })
        .sum();
    total / pairs.len() as f64
}

fn normalize_answer(a: &str) -> String {
    a.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn answer_accuracy(pairs: &[(&TaskInstance, &TaskInstance)]) -> f64 {
    if pairs.is_empty() {
        return 1.0;
    }
    let right = pairs
        .iter()
        .filter(|(g, p)| {
            normalize_answer(g.answer.as_deref().unwrap_or_default())
                == normalize_answer(p.answer.as_deref().unwrap_or_default())
        })
        .count();
    right as f64 / pairs.len() as f64
}

/// Scores `predictions` against `gold` with the task's metric: entity-level
/// F1 (NER), micro F1 (RE), average micro F1 over topic sets (TC) or
/// accuracy (QA).
pub fn compute_metrics(
    gold: &[TaskInstance],
    predictions: &[TaskInstance],
    task: Task,
) -> Result<MetricTable, PipelineError> {
    let pairs = align(gold, predictions)?;
    let (metric, value, confusion) = match task {
        Task::Ner => {
            let c = entity_confusion(&pairs);
            ("entity_f1", c.f1(), Some(c))
        }
        Task::Re => {
            let c = relation_confusion(&pairs);
            ("micro_f1", c.f1(), Some(c))
        }
        Task::Tc => ("average_micro_f1", average_topic_f1(&pairs), None),
        Task::Qa => ("accuracy", answer_accuracy(&pairs), None),
    };
    Ok(MetricTable {
        task,
        metric: metric.to_string(),
        value,
        confusion,
        instances: pairs.len(),
    })
}
