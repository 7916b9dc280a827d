//! Multi-agent review of an augmented sentence against its original.
//!
//! Each iteration draws a judge, asks it for the discrepancies between the
//! two sentences, has every other agent weigh the amendment on four aspects,
//! lets the judge revise, and has the other agents grade the revision. The
//! loop stops once the mean grade exceeds the threshold or the iteration cap
//! is reached.

mod answer;
mod debate;
mod prompts;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;

pub use answer::{
    Aspect, Phase, Verdict, FORMAT_ASPECT, FORMAT_DISCREPANCY, FORMAT_GRADE, FORMAT_REVISION,
    REPROMPT_NOTE,
};
pub use debate::{
    elaborate, grade, review_discrepancies, revise, run_debate, select_judge, DebateConfig,
    DebateFailure, Revision,
};
pub use prompts::{render_prompt, vars, PromptError, PromptId, PromptVars, RenderedPrompt};

pub const DEFAULT_SIGMA: f64 = 0.8;
pub const DEFAULT_MAX_ITERS: usize = 5;
pub const DEFAULT_AGENTS: usize = 3;
/// Sampling parameters every agent request carries.
pub const TEMPERATURE: f64 = 0.1;
pub const TOP_P: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReflectionError {
    #[error("debate requires a judge and at least one reviewer")]
    TooFewAgents,
    #[error("invalid debate config: {0}")]
    InvalidConfig(String),
    #[error("agent `{agent}` failed: {source}")]
    Backend {
        agent: String,
        #[source]
        source: BackendError,
    },
    #[error("agent `{agent}` gave no parseable {phase} answer after a re-prompt")]
    Unparseable { agent: String, phase: Phase },
    #[error("agent `{agent}` did not review aspect `{aspect}` after a re-prompt")]
    MissingAspect { agent: String, aspect: Aspect },
    #[error("revision needs at least one aspect review")]
    NoReviews,
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

pub type Result<T, E = ReflectionError> = std::result::Result<T, E>;

/// Chat request as sent to an agent backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Rendered template header.
    pub system: String,
    /// Rendered template body with the answer format.
    pub user: String,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
}

impl ChatRequest {
    pub fn new(prompt: &RenderedPrompt, seed: u64) -> Self {
        ChatRequest {
            system: prompt.header.clone(),
            user: prompt.body.clone(),
            temperature: TEMPERATURE,
            top_p: TOP_P,
            seed,
        }
    }

    pub fn phase(&self) -> Option<Phase> {
        Phase::detect(&self.user)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
}

/// A chat model taking part in the debate.
pub trait Agent: Send + Sync {
    fn id(&self) -> &str;
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

impl<A: Agent + ?Sized> Agent for std::sync::Arc<A> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).chat(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscrepancyReview {
    pub in_original: String,
    pub in_augmented: String,
    pub locus: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectReview {
    /// Index into the iteration's discrepancies.
    pub discrepancy: usize,
    pub aspect: Aspect,
    pub verdict: Verdict,
    pub rationale: String,
    pub reviewer: String,
}

/// One reviewer's aspect reviews in one iteration, four per discrepancy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectReviewSet {
    pub reviewer: String,
    pub reviews: Vec<AspectReview>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grade {
    pub value: f64,
    pub grader: String,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub judge: usize,
    pub judge_id: String,
    pub discrepancies: Vec<DiscrepancyReview>,
    /// Tagged discrepancy lines that failed to parse or to match.
    pub dropped_lines: usize,
    pub aspect_reviews: Vec<AspectReviewSet>,
    pub revised: String,
    /// False when the judge's revision broke the output contract and the
    /// previous sentence was kept.
    pub revision_applied: bool,
    pub grades: Vec<Grade>,
    pub acceptance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Exhausted,
    /// An agent failed; the transcript holds the completed iterations.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub original: String,
    pub augmented: String,
    pub agents: Vec<String>,
    pub sigma: f64,
    pub max_iters: usize,
    pub iterations: Vec<IterationRecord>,
    pub outcome: Outcome,
    pub final_sentence: String,
}

impl DebateTranscript {
    pub fn final_acceptance(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.acceptance)
    }
}
