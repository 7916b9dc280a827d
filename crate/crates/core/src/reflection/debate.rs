use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::answer::{parse_aspects, parse_discrepancies, parse_grade, parse_revision};
use super::{
    render_prompt, vars, Agent, AspectReview, AspectReviewSet, ChatRequest, DebateTranscript,
    DiscrepancyReview, Grade, IterationRecord, Outcome, Phase, PromptId, ReflectionError,
    RenderedPrompt, Result, DEFAULT_MAX_ITERS, DEFAULT_SIGMA, REPROMPT_NOTE,
};
use crate::backend::derive_seed;
use crate::generation::recover_entities;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebateConfig {
    /// Acceptance threshold; the debate continues while the score is `<= sigma`.
    pub sigma: f64,
    pub max_iters: usize,
}

impl Default for DebateConfig {
    fn default() -> Self {
        DebateConfig {
            sigma: DEFAULT_SIGMA,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

impl DebateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(ReflectionError::InvalidConfig(format!(
                "sigma must be in (0, 1], got {}",
                self.sigma
            )));
        }
        if self.max_iters == 0 {
            return Err(ReflectionError::InvalidConfig(
                "max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A debate that stopped because an agent failed.
#[derive(Debug, Clone, PartialEq)]
pub struct DebateFailure {
    pub error: ReflectionError,
    /// Iterations completed before the failure; outcome is `Aborted`.
    pub transcript: Box<DebateTranscript>,
}

impl std::fmt::Display for DebateFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} iterations)",
            self.error,
            self.transcript.iterations.len()
        )
    }
}

impl std::error::Error for DebateFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Revision {
    pub sentence: String,
    pub applied: bool,
}

/// Uniformly draws the judge index.
pub fn select_judge<R: Rng + ?Sized>(n_agents: usize, rng: &mut R) -> Result<usize> {
    if n_agents < 2 {
        return Err(ReflectionError::TooFewAgents);
    }
    Ok(rng.random_range(0..n_agents))
}

fn answer_format_block(format: &str) -> String {
    format!("\n\nRequired Answer Format:\n{format}")
}

/// Sends `prompt`, parsing with `parse`; re-prompts once on `Err`.
fn ask<T, E>(
    agent: &dyn Agent,
    prompt: &RenderedPrompt,
    seed: u64,
    parse: impl Fn(&str) -> std::result::Result<T, E>,
) -> Result<std::result::Result<T, E>> {
    let mut request = ChatRequest::new(prompt, seed);
    let call = |r: &ChatRequest| {
        agent.chat(r).map_err(|source| ReflectionError::Backend {
            agent: agent.id().to_string(),
            source,
        })
    };
    let first = parse(&call(&request)?);
    if first.is_ok() {
        return Ok(first);
    }
    request.user = format!("{}\n\n{REPROMPT_NOTE}", request.user);
    request.seed = derive_seed(seed, "reprompt");
    Ok(parse(&call(&request)?))
}

/// The judge's discrepancy tuples, plus how many tagged lines were dropped.
///
/// Equal sentences yield no discrepancies without calling the judge.
pub fn review_discrepancies(
    judge: &dyn Agent,
    original: &str,
    augmented: &str,
    seed: u64,
) -> Result<(Vec<DiscrepancyReview>, usize)> {
    if original == augmented {
        return Ok((Vec::new(), 0));
    }
    let topic = format!(
        "the greatest discrepancies between the original sentence ‘{original}’ and the augmented sentence ‘{augmented}’"
    );
    let prompt = render_prompt(
        PromptId::DebateInitial,
        &vars([
            ("topic", topic.as_str()),
            ("answer_format", Phase::Discrepancy.answer_format()),
        ]),
    )?;
    let mut dropped_total = 0;
    let parsed = ask(judge, &prompt, seed, |text| {
        let (found, dropped) = parse_discrepancies(text, original, augmented);
        if found.is_empty() {
            Err(dropped)
        } else {
            Ok((found, dropped))
        }
    })?;
    match parsed {
        Ok((found, dropped)) => {
            dropped_total += dropped;
            if dropped_total > 0 {
                log::warn!(
                    "judge `{}`: dropped {dropped_total} discrepancy lines",
                    judge.id()
                );
            }
            let reviews = found
                .into_iter()
                .map(|(a, b, locus)| DiscrepancyReview {
                    in_original: a,
                    in_augmented: b,
                    locus,
                })
                .collect();
            Ok((reviews, dropped_total))
        }
        Err(_) => Err(ReflectionError::Unparseable {
            agent: judge.id().to_string(),
            phase: Phase::Discrepancy,
        }),
    }
}

/// One reviewer's verdict on each of the four aspects of a discrepancy.
pub fn elaborate(
    reviewer: &dyn Agent,
    discrepancy: &DiscrepancyReview,
    index: usize,
    original: &str,
    augmented: &str,
    seed: u64,
) -> Result<Vec<AspectReview>> {
    let mut prompt = render_prompt(
        PromptId::Distinguish,
        &vars([("original", original), ("augmented", augmented)]),
    )?;
    prompt.body.push_str(&format!(
        "\n\nAmendment under review: ‘{}’ in the original became ‘{}’ in the augmented data ({}).",
        discrepancy.in_original, discrepancy.in_augmented, discrepancy.locus
    ));
    prompt
        .body
        .push_str(&answer_format_block(Phase::Aspect.answer_format()));
    match ask(reviewer, &prompt, seed, parse_aspects)? {
        Ok(found) => Ok(found
            .into_iter()
            .map(|(aspect, verdict, rationale)| AspectReview {
                discrepancy: index,
                aspect,
                verdict,
                rationale,
                reviewer: reviewer.id().to_string(),
            })
            .collect()),
        Err(aspect) => Err(ReflectionError::MissingAspect {
            agent: reviewer.id().to_string(),
            aspect,
        }),
    }
}

fn format_reviews(
    augmented: &str,
    discrepancies: &[DiscrepancyReview],
    reviews: &[AspectReview],
) -> String {
    let mut out = format!("Augmented sentence: ‘{augmented}’");
    for r in reviews {
        let d = &discrepancies[r.discrepancy];
        let verdict = match r.verdict {
            super::Verdict::Reasonable => "reasonable",
            super::Verdict::Unreasonable => "unreasonable",
        };
        out.push_str(&format!(
            "\n- {} on {} for ‘{}’ -> ‘{}’: {verdict}; {}",
            r.reviewer, r.aspect, d.in_original, d.in_augmented, r.rationale
        ));
    }
    out
}

/// The judge's refinement of `augmented`.
///
/// A revision that drops an entity, keeps a mask sentinel or unbalances the
/// entity markers is discarded and `augmented` is kept with `applied` false.
pub fn revise(
    judge: &dyn Agent,
    augmented: &str,
    discrepancies: &[DiscrepancyReview],
    reviews: &[AspectReview],
    entities: &[(String, String)],
    seed: u64,
) -> Result<Revision> {
    if reviews.is_empty() {
        return Err(ReflectionError::NoReviews);
    }
    let listing = format_reviews(augmented, discrepancies, reviews);
    let prompt = render_prompt(
        PromptId::DebateRevision,
        &vars([
            ("reviews", listing.as_str()),
            ("answer_format", Phase::Revision.answer_format()),
        ]),
    )?;
    let text = ask(judge, &prompt, seed, |t| parse_revision(t).ok_or(()))?.map_err(|_| {
        ReflectionError::Unparseable {
            agent: judge.id().to_string(),
            phase: Phase::Revision,
        }
    })?;
    let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
    match recover_entities(&tokens, entities) {
        Ok((plain, _)) => Ok(Revision {
            sentence: plain.join(" "),
            applied: true,
        }),
        Err(e) => {
            log::info!("judge `{}`: revision rejected: {e}", judge.id());
            Ok(Revision {
                sentence: augmented.to_string(),
                applied: false,
            })
        }
    }
}

/// A non-judge's grade of `augmented` on `[0, 1]`.
pub fn grade(
    grader: &dyn Agent,
    original: &str,
    augmented: &str,
    iteration: usize,
    seed: u64,
) -> Result<Grade> {
    let topic = format!(
        "whether the augmented sentence faithfully rewrites the original sentence ‘{original}’ without changing its facts"
    );
    let prompt = render_prompt(
        PromptId::DebateReview,
        &vars([
            ("topic", topic.as_str()),
            ("initial_statement", augmented),
            ("answer_format", Phase::Grade.answer_format()),
        ]),
    )?;
    let value = ask(grader, &prompt, seed, |t| parse_grade(t).ok_or(()))?.map_err(|_| {
        ReflectionError::Unparseable {
            agent: grader.id().to_string(),
            phase: Phase::Grade,
        }
    })?;
    Ok(Grade {
        value,
        grader: grader.id().to_string(),
        iteration,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn one_iteration<A: Agent>(
    iteration: usize,
    judge: usize,
    agents: &[A],
    original: &str,
    augmented: &str,
    entities: &[(String, String)],
    seed: u64,
) -> Result<IterationRecord> {
    let step =
        |label: &str, agent: usize| derive_seed(seed, &format!("{iteration}/{label}/{agent}"));
    let others: Vec<usize> = (0..agents.len()).filter(|&i| i != judge).collect();

    let (discrepancies, dropped_lines) =
        review_discrepancies(&agents[judge], original, augmented, step("review", judge))?;

    let aspect_reviews: Vec<AspectReviewSet> = others
        .par_iter()
        .map(|&i| {
            let mut reviews = Vec::with_capacity(4 * discrepancies.len());
            for (d, disc) in discrepancies.iter().enumerate() {
                let seed = step(&format!("elaborate/{d}"), i);
                reviews.extend(elaborate(&agents[i], disc, d, original, augmented, seed)?);
            }
            Ok(AspectReviewSet {
                reviewer: agents[i].id().to_string(),
                reviews,
            })
        })
        .collect::<Result<_>>()?;

    let all_reviews: Vec<AspectReview> = aspect_reviews
        .iter()
        .flat_map(|s| s.reviews.iter().cloned())
        .collect();
    let revision = if all_reviews.is_empty() {
        Revision {
            sentence: augmented.to_string(),
            applied: false,
        }
    } else {
        revise(
            &agents[judge],
            augmented,
            &discrepancies,
            &all_reviews,
            entities,
            step("revise", judge),
        )?
    };

    let grades: Vec<Grade> = others
        .par_iter()
        .map(|&i| {
            grade(
                &agents[i],
                original,
                &revision.sentence,
                iteration,
                step("grade", i),
            )
        })
        .collect::<Result<_>>()?;
    let acceptance = mean(&grades.iter().map(|g| g.value).collect::<Vec<_>>());

    Ok(IterationRecord {
        iteration,
        judge,
        judge_id: agents[judge].id().to_string(),
        discrepancies,
        dropped_lines,
        aspect_reviews,
        revised: revision.sentence,
        revision_applied: revision.applied,
        grades,
        acceptance,
    })
}

/// Runs the debate over `(original, augmented)`.
///
/// `entities` holds the `(type, surface)` pairs every revision must keep.
/// Iterations run until the mean grade exceeds `config.sigma` or
/// `config.max_iters` is reached. Judge draws come from a ChaCha8 stream
/// seeded with `seed`, so equal inputs give equal transcripts.
pub fn run_debate<A: Agent>(
    original: &str,
    augmented: &str,
    entities: &[(String, String)],
    agents: &[A],
    config: &DebateConfig,
    seed: u64,
) -> std::result::Result<DebateTranscript, DebateFailure> {
    let mut transcript = DebateTranscript {
        original: original.to_string(),
        augmented: augmented.to_string(),
        agents: agents.iter().map(|a| a.id().to_string()).collect(),
        sigma: config.sigma,
        max_iters: config.max_iters,
        iterations: Vec::new(),
        outcome: Outcome::Aborted,
        final_sentence: augmented.to_string(),
    };
    let fail = |error, transcript| DebateFailure {
        error,
        transcript: Box::new(transcript),
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, transcript));
    }
    if agents.len() < 2 {
        return Err(fail(ReflectionError::TooFewAgents, transcript));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = augmented.to_string();
    for iteration in 1..=config.max_iters {
        let judge = select_judge(agents.len(), &mut rng).expect("agent count checked");
        let record =
            match one_iteration(iteration, judge, agents, original, &current, entities, seed) {
                Ok(r) => r,
                Err(e) => {
                    transcript.final_sentence = current;
                    return Err(fail(e, transcript));
                }
            };
        current = record.revised.clone();
        let accepted = record.acceptance > config.sigma;
        transcript.iterations.push(record);
        if accepted {
            transcript.outcome = Outcome::Accepted;
            transcript.final_sentence = current;
            return Ok(transcript);
        }
    }
    transcript.outcome = Outcome::Exhausted;
    transcript.final_sentence = current;
    Ok(transcript)
}
