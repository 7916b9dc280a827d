use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{DatasetFormat, Task};
use crate::generation::{DEFAULT_EXEMPLARS, DEFAULT_MAX_ROUNDS, DEFAULT_THRESHOLD};
use crate::reflection::{DEFAULT_AGENTS, DEFAULT_MAX_ITERS, DEFAULT_SIGMA};

/// Environment variable overriding `backend.endpoint`.
pub const ENV_ENDPOINT: &str = "BIOAUG_ENDPOINT";
/// Environment variable holding the API key sent to the model server.
pub const ENV_API_KEY: &str = "BIOAUG_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendMode {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockScorer {
    #[default]
    Pairwise,
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockGenerator {
    #[default]
    Identity,
    Synonym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockExtractor {
    #[default]
    Medoid,
    Echo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: BackendMode,
    /// Base URL of the model server, for `mode = "http"`.
    pub endpoint: Option<String>,
    /// Only ever read from the environment; never written to reports.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Model names forwarded with chat requests, one per agent. Empty means
    /// every agent uses the server default.
    pub agent_models: Vec<String>,
    pub mock_scorer: MockScorer,
    pub mock_generator: MockGenerator,
    pub mock_extractor: MockExtractor,
    /// Grade (0 to 100) every mock agent gives.
    pub mock_grade: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            mode: BackendMode::Mock,
            endpoint: None,
            api_key: None,
            timeout_secs: 60.0,
            max_retries: 3,
            agent_models: Vec::new(),
            mock_scorer: MockScorer::default(),
            mock_generator: MockGenerator::default(),
            mock_extractor: MockExtractor::default(),
            mock_grade: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Augmented dataset, canonical JSONL.
    pub dataset: Option<PathBuf>,
    /// Run report, JSON.
    pub report: Option<PathBuf>,
    /// Wall-clock timings and raw cache counters, JSON. Kept apart from the
    /// report because they differ between runs.
    pub timings: Option<PathBuf>,
    /// Directory receiving one transcript file per debate.
    pub transcripts: Option<PathBuf>,
    /// Persistent response cache, JSONL.
    pub cache: Option<PathBuf>,
}

/// Gold and predicted datasets (canonical JSONL) to score after the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub gold: PathBuf,
    pub predictions: PathBuf,
}

/// Everything an `augment` run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub format: DatasetFormat,
    /// When set, every instance must be of this task.
    pub task: Option<Task>,
    /// Label definitions (relation, entity type or topic to text).
    pub notions: Option<PathBuf>,
    pub seed: u64,
    /// Share of instances to augment, in `[0, 1]`.
    pub proportion: f64,
    /// Keywords kept per template; `None` picks a quarter of the candidates
    /// (at least 3).
    pub n_keywords: Option<usize>,
    pub k_exemplars: usize,
    pub similarity_threshold: f64,
    pub max_rounds: usize,
    pub sigma: f64,
    pub max_iters: usize,
    pub n_agents: usize,
    /// Worker threads; `None` uses all cores. Never changes the output.
    pub workers: Option<usize>,
    pub backend: BackendConfig,
    pub output: OutputConfig,
    pub evaluation: Option<EvaluationConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::new(),
            format: DatasetFormat::CanonicalJsonl,
            task: None,
            notions: None,
            seed: 0,
            proportion: 1.0,
            n_keywords: None,
            k_exemplars: DEFAULT_EXEMPLARS,
            similarity_threshold: DEFAULT_THRESHOLD,
            max_rounds: DEFAULT_MAX_ROUNDS,
            sigma: DEFAULT_SIGMA,
            max_iters: DEFAULT_MAX_ITERS,
            n_agents: DEFAULT_AGENTS,
            workers: None,
            backend: BackendConfig::default(),
            output: OutputConfig::default(),
            evaluation: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a TOML file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        let o = &mut self.output;
        for p in [
            &mut self.notions,
            &mut o.dataset,
            &mut o.report,
            &mut o.timings,
            &mut o.transcripts,
            &mut o.cache,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(e) = &mut self.evaluation {
            fix(&mut e.gold);
            fix(&mut e.predictions);
        }
    }

    /// Applies `BIOAUG_ENDPOINT` and `BIOAUG_API_KEY` through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(url) = lookup(ENV_ENDPOINT).filter(|v| !v.is_empty()) {
            self.backend.endpoint = Some(url);
        }
        if let Some(key) = lookup(ENV_API_KEY).filter(|v| !v.is_empty()) {
            self.backend.api_key = Some(key);
        }
    }

    /// Every range violation, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dataset.as_os_str().is_empty() {
            out.push("dataset path is required".to_string());
        }
        if !(0.0..=1.0).contains(&self.proportion) {
            out.push(format!(
                "proportion must be in [0, 1], got {}",
                self.proportion
            ));
        }
        if self.n_keywords == Some(0) {
            out.push("n_keywords must be at least 1".into());
        }
        if self.k_exemplars == 0 {
            out.push("k_exemplars must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.similarity_threshold) {
            out.push(format!(
                "similarity_threshold must be in [0, 1), got {}",
                self.similarity_threshold
            ));
        }
        if self.max_rounds == 0 {
            out.push("max_rounds must be at least 1".into());
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            out.push(format!("sigma must be in (0, 1], got {}", self.sigma));
        }
        if self.max_iters == 0 {
            out.push("max_iters must be at least 1".into());
        }
        if self.n_agents < 2 {
            out.push("n_agents must be at least 2 (a judge and a reviewer)".into());
        }
        if self.backend.mock_grade > 100 {
            out.push(format!(
                "mock_grade must be at most 100, got {}",
                self.backend.mock_grade
            ));
        }
        if self.workers == Some(0) {
            out.push("workers must be at least 1".into());
        }
        if self.backend.mode == BackendMode::Http {
            if self.backend.endpoint.is_none() {
                out.push(format!(
                    "http backend needs `backend.endpoint` or {ENV_ENDPOINT}"
                ));
            }
            let models = self.backend.agent_models.len();
            if models != 0 && models != self.n_agents {
                out.push(format!(
                    "backend.agent_models lists {models} models for {} agents",
                    self.n_agents
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(problems.join("; ")))
        }
    }
}
