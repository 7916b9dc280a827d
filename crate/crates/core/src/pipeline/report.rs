use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricTable, RunConfig};
use crate::backend::CacheStats;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub attempted: usize,
    pub accepted: usize,
    pub exhausted: usize,
    pub degenerate: usize,
}

impl Counts {
    /// `attempted = accepted + exhausted + degenerate`.
    pub fn balanced(&self) -> bool {
        self.attempted == self.accepted + self.exhausted + self.degenerate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Accepted,
    Exhausted,
    Degenerate,
}

/// What happened to one attempted instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub id: String,
    pub status: InstanceStatus,
    /// Stage that failed, for degenerate instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub rank_fallback: bool,
    pub key_structure_best_effort: bool,
    /// The accepted sentence equals the original.
    pub trivial: bool,
    pub debate_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented_id: Option<String>,
}

/// Cache counters that depend only on the requests made.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogicalCacheStats {
    pub requests: u64,
    pub distinct: u64,
    pub hit_rate: f64,
}

impl From<CacheStats> for LogicalCacheStats {
    fn from(s: CacheStats) -> Self {
        LogicalCacheStats {
            requests: s.requests,
            distinct: s.distinct,
            hit_rate: s.logical_hit_rate(),
        }
    }
}

/// Deterministic summary of an `augment` run: identical inputs give a
/// byte-identical report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input_instances: usize,
    pub output_instances: usize,
    pub counts: Counts,
    pub rank_fallbacks: usize,
    pub key_structure_best_effort: usize,
    pub trivial: usize,
    /// Degenerate instances per failing stage.
    pub degenerate_reasons: BTreeMap<String, usize>,
    pub cache: LogicalCacheStats,
    pub instances: Vec<InstanceSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricTable>,
    pub config: RunConfig,
}

impl RunReport {
    pub fn from_summaries(
        input_instances: usize,
        instances: Vec<InstanceSummary>,
        cache: CacheStats,
        config: RunConfig,
    ) -> Self {
        let mut counts = Counts {
            attempted: instances.len(),
            ..Counts::default()
        };
        let mut degenerate_reasons = BTreeMap::new();
        for s in &instances {
            match s.status {
                InstanceStatus::Accepted => counts.accepted += 1,
                InstanceStatus::Exhausted => counts.exhausted += 1,
                InstanceStatus::Degenerate => {
                    counts.degenerate += 1;
                    let stage = s.stage.clone().unwrap_or_else(|| "unknown".into());
                    *degenerate_reasons.entry(stage).or_insert(0) += 1;
                }
            }
        }
        RunReport {
            input_instances,
            output_instances: input_instances + counts.accepted,
            counts,
            rank_fallbacks: instances.iter().filter(|s| s.rank_fallback).count(),
            key_structure_best_effort: instances
                .iter()
                .filter(|s| s.key_structure_best_effort)
                .count(),
            trivial: instances.iter().filter(|s| s.trivial).count(),
            degenerate_reasons,
            cache: cache.into(),
            instances,
            metrics: None,
            config,
        }
    }

    /// Short human-readable summary.
    pub fn render_text(&self) -> String {
        let c = &self.counts;
        let mut out = format!(
            "instances: {} in, {} out\nattempted: {}  accepted: {}  exhausted: {}  degenerate: {}\n",
            self.input_instances,
            self.output_instances,
            c.attempted,
            c.accepted,
            c.exhausted,
            c.degenerate
        );
        out.push_str(&format!(
            "rank fallbacks: {}  best-effort key structures: {}  trivial: {}\n",
            self.rank_fallbacks, self.key_structure_best_effort, self.trivial
        ));
        for (stage, n) in &self.degenerate_reasons {
            out.push_str(&format!("degenerate at {stage}: {n}\n"));
        }
        out.push_str(&format!(
            "cache: {} requests, {} distinct, hit rate {:.3}\n",
            self.cache.requests, self.cache.distinct, self.cache.hit_rate
        ));
        if let Some(m) = &self.metrics {
            out.push_str(&format!(
                "{} {}: {:.4}\n",
                m.task.as_str(),
                m.metric,
                m.value
            ));
        }
        out
    }
}

/// Wall-clock seconds per stage, summed over instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub attribution: f64,
    pub key_structure: f64,
    pub generation: f64,
    pub debate: f64,
}

impl StageTimings {
    pub fn add(&mut self, other: &StageTimings) {
        self.attribution += other.attribution;
        self.key_structure += other.key_structure;
        self.generation += other.generation;
        self.debate += other.debate;
    }
}

/// The run-dependent part of a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_secs: f64,
    pub stages: StageTimings,
    pub cache: CacheStats,
}
