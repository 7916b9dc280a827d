use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BackendMode, MockExtractor, MockGenerator, MockScorer};
use super::report::{InstanceStatus, InstanceSummary, RunReport, StageTimings, Timings};
use super::{compute_metrics, Cached, PipelineError, Result, RunConfig};
use crate::attribution::{
    attr_bio, attr_lexicon, default_keyword_count, normalize_bio, normalize_lexicon,
    normalize_rank, pair_contribution, select_keywords, AttributionError, AttributionMap,
    AttributionReport, LooScorer, MaskedTemplate, Scorer, ScorerKind,
};
use crate::backend::http::{
    HttpAgent, HttpConfig, HttpExtractor, HttpGenerator, HttpScorer, SidecarClient,
};
use crate::backend::{derive_seed, ResponseCache};
use crate::corpus::{
    derive_attribution_target, load_dataset, write_dataset, Dataset, DatasetFormat, EntityMention,
    NotionTable, Task, TaskInstance,
};
use crate::generation::{
    extract_key_structure, generate_candidate, project_labels, recover_entities, sample_similar,
    AugCandidate, ExemplarQuery, Extractor, GenerationMeta, Generator, SimilarityMeasure, TokenLcs,
};
use crate::mock::{
    AdditiveScorer, EchoExtractor, IdentityGenerator, MedoidExtractor, PairwiseScorer, Script,
    ScriptedAgent, SynonymGenerator,
};
use crate::reflection::{run_debate, Agent, DebateConfig, DebateTranscript, Outcome};

/// Every model the pipeline talks to, each behind the shared cache.
#[derive(Clone)]
pub struct Backends {
    pub lexicon: Arc<dyn Scorer>,
    pub relation: Arc<dyn Scorer>,
    pub generator: Arc<dyn Generator>,
    pub extractor: Arc<dyn Extractor>,
    pub agents: Vec<Arc<dyn Agent>>,
    pub similarity: Arc<dyn SimilarityMeasure>,
    pub cache: Arc<ResponseCache>,
}

impl Backends {
    /// Wraps each backend so identical requests share one response.
    pub fn cached(
        lexicon: Arc<dyn Scorer>,
        relation: Arc<dyn Scorer>,
        generator: Arc<dyn Generator>,
        extractor: Arc<dyn Extractor>,
        agents: Vec<Arc<dyn Agent>>,
        cache: Arc<ResponseCache>,
    ) -> Self {
        Backends {
            lexicon: Arc::new(Cached::new(lexicon, Arc::clone(&cache))),
            relation: Arc::new(Cached::new(relation, Arc::clone(&cache))),
            generator: Arc::new(Cached::new(generator, Arc::clone(&cache))),
            extractor: Arc::new(Cached::new(extractor, Arc::clone(&cache))),
            agents: agents
                .into_iter()
                .map(|a| Arc::new(Cached::new(a, Arc::clone(&cache))) as Arc<dyn Agent>)
                .collect(),
            similarity: Arc::new(TokenLcs),
            cache,
        }
    }

    /// In-process mocks. The generators reconstruct sentences of `dataset`.
    pub fn mock(config: &RunConfig, dataset: &[TaskInstance], cache: Arc<ResponseCache>) -> Self {
        let b = &config.backend;
        let scorer = |kind: ScorerKind, salt: u64| -> Arc<dyn Scorer> {
            match b.mock_scorer {
                MockScorer::Pairwise => Arc::new(PairwiseScorer::new(kind, salt, 0.3)),
                MockScorer::Additive => Arc::new(AdditiveScorer::new(kind, salt)),
            }
        };
        let generator: Arc<dyn Generator> = match b.mock_generator {
            MockGenerator::Identity => Arc::new(IdentityGenerator::from_dataset(dataset)),
            MockGenerator::Synonym => Arc::new(SynonymGenerator::from_dataset(dataset)),
        };
        let extractor: Arc<dyn Extractor> = match b.mock_extractor {
            MockExtractor::Medoid => Arc::new(MedoidExtractor),
            MockExtractor::Echo => Arc::new(EchoExtractor),
        };
        let n = config.n_agents;
        let (team, _) =
            ScriptedAgent::team(n, Script::new(vec![b.mock_grade], n.saturating_sub(1)));
        let agents = team
            .into_iter()
            .map(|a| Arc::new(a) as Arc<dyn Agent>)
            .collect();
        Self::cached(
            scorer(ScorerKind::TaskLogit, 1),
            scorer(ScorerKind::InferenceRelativity, 2),
            generator,
            extractor,
            agents,
            cache,
        )
    }

    /// Clients for a model server at `backend.endpoint`.
    pub fn http(config: &RunConfig, cache: Arc<ResponseCache>) -> Result<Self> {
        let b = &config.backend;
        let endpoint = b
            .endpoint
            .clone()
            .ok_or_else(|| PipelineError::Config("http backend needs an endpoint".into()))?;
        let mut http = HttpConfig::new(endpoint);
        http.api_key = b.api_key.clone();
        http.timeout_secs = b.timeout_secs;
        http.max_retries = b.max_retries;
        let client = SidecarClient::new(http);
        let agents = (0..config.n_agents)
            .map(|i| {
                let model = b.agent_models.get(i).cloned();
                Arc::new(HttpAgent::new(
                    client.clone(),
                    format!("agent-{}", i + 1),
                    model,
                )) as Arc<dyn Agent>
            })
            .collect();
        Ok(Self::cached(
            Arc::new(HttpScorer::new(client.clone(), ScorerKind::TaskLogit)),
            Arc::new(HttpScorer::new(
                client.clone(),
                ScorerKind::InferenceRelativity,
            )),
            Arc::new(HttpGenerator::new(client.clone())),
            Arc::new(HttpExtractor::new(client)),
            agents,
            cache,
        ))
    }

    pub fn from_config(
        config: &RunConfig,
        dataset: &[TaskInstance],
        cache: Arc<ResponseCache>,
    ) -> Result<Self> {
        match config.backend.mode {
            BackendMode::Mock => Ok(Self::mock(config, dataset, cache)),
            BackendMode::Http => Self::http(config, cache),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Target,
    Attribution,
    Template,
    Exemplars,
    KeyStructure,
    Generation,
    Debate,
    Projection,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Target => "target",
            Stage::Attribution => "attribution",
            Stage::Template => "template",
            Stage::Exemplars => "exemplars",
            Stage::KeyStructure => "key_structure",
            Stage::Generation => "generation",
            Stage::Debate => "debate",
            Stage::Projection => "projection",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

fn at<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> StageError {
    move |e| StageError {
        stage,
        message: e.to_string(),
    }
}

/// Entities carried into the template: the ordered pair for RE, every
/// entity for NER, none otherwise.
fn template_entities(inst: &TaskInstance) -> Vec<EntityMention> {
    match inst.task {
        Task::Re => inst
            .entity_pair()
            .map(|(a, b)| vec![a.clone(), b.clone()])
            .unwrap_or_default(),
        Task::Ner => inst.entities.clone(),
        Task::Tc | Task::Qa => Vec::new(),
    }
}

/// Normalizes the lexicon map, falling back to ranks when the reference
/// contribution is not positive. Returns whether the fallback was used.
fn normalize_lexicon_or_rank(
    inst: &TaskInstance,
    raw: &AttributionMap,
    loo: &LooScorer<'_>,
) -> std::result::Result<(AttributionMap, bool), AttributionError> {
    let reference = match (inst.task, inst.entity_pair()) {
        (Task::Re, Some((e1, e2))) => {
            pair_contribution(&inst.token_texts(), e1.span(), e2.span(), loo)?
        }
        _ => raw
            .entries
            .values()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    };
    match normalize_lexicon(raw, reference) {
        Ok(m) => Ok((m, false)),
        Err(AttributionError::Degenerate(_)) => Ok((normalize_rank(raw), true)),
        Err(e) => Err(e),
    }
}

/// Both maps, the keywords and the template for one instance.
#[derive(Debug, Clone)]
pub struct Attributed {
    pub report: AttributionReport,
    pub template: MaskedTemplate,
    pub rank_fallback: bool,
}

/// Runs the attribution stage on one instance: target, both maps,
/// normalization, keyword selection and the masked template.
pub fn attribute_instance(
    inst: &TaskInstance,
    notions: &NotionTable,
    lexicon: &dyn Scorer,
    relation: &dyn Scorer,
    n_keywords: Option<usize>,
) -> std::result::Result<Attributed, StageError> {
    let target = derive_attribution_target(inst, notions).map_err(at(Stage::Target))?;
    let tokens = inst.token_texts();
    let lex_loo = LooScorer::new(lexicon);
    let rel_loo = LooScorer::new(relation);
    let raw_lex = attr_lexicon(&tokens, &target.spans, &lex_loo).map_err(at(Stage::Attribution))?;
    let raw_rel = attr_bio(&tokens, &target.spans, &target.restriction_text, &rel_loo)
        .map_err(at(Stage::Attribution))?;
    let (lex, rank_fallback) =
        normalize_lexicon_or_rank(inst, &raw_lex, &lex_loo).map_err(at(Stage::Attribution))?;
    let rel = normalize_bio(&raw_rel).map_err(at(Stage::Attribution))?;
    let n = n_keywords.unwrap_or_else(|| default_keyword_count(lex.entries.len()));
    let keywords = select_keywords(&lex, &rel, n).map_err(at(Stage::Attribution))?;
    let template = MaskedTemplate::build(&tokens, &keywords.kept, &template_entities(inst))
        .map_err(at(Stage::Template))?;
    Ok(Attributed {
        report: AttributionReport {
            instance_id: inst.id.clone(),
            tokens,
            restriction_text: target.restriction_text,
            lexicon: lex,
            relation: rel,
            keywords,
            template: template.render(),
        },
        template,
        rank_fallback,
    })
}

/// Result of the whole chain on one instance.
#[derive(Debug, Clone)]
pub struct InstanceOutcome {
    pub summary: InstanceSummary,
    pub augmented: Option<TaskInstance>,
    pub transcript: Option<DebateTranscript>,
    pub timings: StageTimings,
}

struct Progress {
    summary: InstanceSummary,
    transcript: Option<DebateTranscript>,
    timings: StageTimings,
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

/// Rebuilds the candidate for a sentence the judge revised.
fn revised_candidate(
    cand: &AugCandidate,
    sentence: &str,
    parent: &TaskInstance,
) -> crate::generation::Result<AugCandidate> {
    let tokens: Vec<String> = sentence.split_whitespace().map(String::from).collect();
    let expected: Vec<(String, String)> = cand
        .entities
        .iter()
        .map(|e| (e.entity_type.clone(), e.surface.clone()))
        .collect();
    let (tokens, entities) = recover_entities(&tokens, &expected)?;
    let trivial = tokens.len() == parent.tokens.len()
        && tokens.iter().zip(&parent.tokens).all(|(a, b)| *a == b.text);
    Ok(AugCandidate {
        parent_id: cand.parent_id.clone(),
        tokens,
        entities,
        trivial,
        meta: cand.meta.clone(),
    })
}

fn run_chain(
    inst: &TaskInstance,
    dataset: &[TaskInstance],
    notions: &NotionTable,
    backends: &Backends,
    config: &RunConfig,
    p: &mut Progress,
) -> std::result::Result<Option<TaskInstance>, StageError> {
    let seed = derive_seed(config.seed, &inst.id);
    let attributed = timed(&mut p.timings.attribution, || {
        attribute_instance(
            inst,
            notions,
            backends.lexicon.as_ref(),
            backends.relation.as_ref(),
            config.n_keywords,
        )
    })?;
    p.summary.rank_fallback = attributed.rank_fallback;
    let restriction = attributed.report.restriction_text.clone();

    let key_structure = timed(&mut p.timings.key_structure, || {
        let query = ExemplarQuery::for_instance(inst);
        let exemplars = sample_similar(
            dataset,
            &query,
            config.k_exemplars,
            derive_seed(seed, "exemplars"),
        )
        .map_err(at(Stage::Exemplars))?;
        let texts: Vec<String> = exemplars.iter().map(|e| e.text()).collect();
        extract_key_structure(
            &inst.text(),
            &texts,
            &restriction,
            backends.extractor.as_ref(),
            backends.similarity.as_ref(),
            config.similarity_threshold,
            config.max_rounds,
        )
        .map_err(at(Stage::KeyStructure))
    })?;
    p.summary.key_structure_best_effort = key_structure.best_effort;

    let candidate = timed(&mut p.timings.generation, || {
        let meta = GenerationMeta {
            n_keywords: attributed.report.keywords.n,
            k_exemplars: config.k_exemplars,
            backend: backends.generator.id().to_string(),
            seed: derive_seed(seed, "infill"),
            key_structure_best_effort: key_structure.best_effort,
        };
        let cand = generate_candidate(
            inst,
            &attributed.template,
            &restriction,
            &key_structure,
            backends.generator.as_ref(),
            meta.seed,
            meta,
        )
        .map_err(at(Stage::Generation))?;
        project_labels(inst, &cand).map_err(at(Stage::Generation))?;
        Ok::<_, StageError>(cand)
    })?;

    let entities: Vec<(String, String)> = candidate
        .entities
        .iter()
        .map(|e| (e.entity_type.clone(), e.surface.clone()))
        .collect();
    let debate = DebateConfig {
        sigma: config.sigma,
        max_iters: config.max_iters,
    };
    let outcome = timed(&mut p.timings.debate, || {
        run_debate(
            &inst.text(),
            &candidate.text(),
            &entities,
            &backends.agents,
            &debate,
            derive_seed(seed, "debate"),
        )
    });
    let transcript = match outcome {
        Ok(t) => t,
        Err(failure) => {
            p.transcript = Some(*failure.transcript);
            return Err(at(Stage::Debate)(failure.error));
        }
    };
    p.summary.debate_iterations = transcript.iterations.len();
    p.summary.acceptance = transcript.final_acceptance();
    let accepted = transcript.outcome == Outcome::Accepted;
    let final_sentence = transcript.final_sentence.clone();
    p.transcript = Some(transcript);
    if !accepted {
        return Ok(None);
    }

    let final_candidate = if final_sentence == candidate.text() {
        candidate
    } else {
        revised_candidate(&candidate, &final_sentence, inst).map_err(at(Stage::Projection))?
    };
    p.summary.trivial = final_candidate.trivial;
    let augmented = project_labels(inst, &final_candidate).map_err(at(Stage::Projection))?;
    Ok(Some(augmented))
}

/// Runs the full chain on one instance. Never fails: a failing stage makes
/// the instance degenerate.
pub fn augment_instance(
    inst: &TaskInstance,
    dataset: &[TaskInstance],
    notions: &NotionTable,
    backends: &Backends,
    config: &RunConfig,
) -> InstanceOutcome {
    let mut p = Progress {
        summary: InstanceSummary {
            id: inst.id.clone(),
            status: InstanceStatus::Degenerate,
            stage: None,
            reason: None,
            rank_fallback: false,
            key_structure_best_effort: false,
            trivial: false,
            debate_iterations: 0,
            acceptance: None,
            augmented_id: None,
        },
        transcript: None,
        timings: StageTimings::default(),
    };
    let augmented = match run_chain(inst, dataset, notions, backends, config, &mut p) {
        Ok(Some(aug)) => {
            p.summary.status = InstanceStatus::Accepted;
            p.summary.augmented_id = Some(aug.id.clone());
            Some(aug)
        }
        Ok(None) => {
            p.summary.status = InstanceStatus::Exhausted;
            None
        }
        Err(e) => {
            log::warn!("instance {}: {e}", inst.id);
            p.summary.stage = Some(e.stage.to_string());
            p.summary.reason = Some(e.message);
            None
        }
    };
    InstanceOutcome {
        summary: p.summary,
        augmented,
        transcript: p.transcript,
        timings: p.timings,
    }
}

/// Indices of the instances to augment: a seeded shuffle of `0..n`, cut to
/// `round(proportion * n)`, returned in ascending order.
pub fn select_subset(n: usize, proportion: f64, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "subset"));
    idx.shuffle(&mut rng);
    let keep = ((proportion.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    idx.truncate(keep);
    idx.sort_unstable();
    idx
}

/// File name for an instance's debate transcript. Unsafe characters are
/// replaced and a short hash of the id keeps names distinct.
pub fn transcript_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}-{:08x}.json", derive_seed(0, id) as u32)
}

/// Augmented dataset, report, timings and transcripts of one run.
#[derive(Debug, Clone)]
pub struct AugmentOutput {
    pub dataset: Dataset,
    pub report: RunReport,
    pub timings: Timings,
    /// `(instance id, transcript)` for every debate that ran, in input order.
    pub transcripts: Vec<(String, DebateTranscript)>,
}

/// Augments a seeded `config.proportion` share of `dataset`.
///
/// The output holds the input verbatim, followed by the accepted
/// augmentations in input order. Worker count never changes the output.
pub fn augment(
    dataset: &[TaskInstance],
    notions: &NotionTable,
    backends: &Backends,
    config: &RunConfig,
) -> Result<AugmentOutput> {
    config.validate()?;
    let start = Instant::now();
    let subset = select_subset(dataset.len(), config.proportion, config.seed);
    let work = || -> Vec<InstanceOutcome> {
        subset
            .par_iter()
            .map(|&i| augment_instance(&dataset[i], dataset, notions, backends, config))
            .collect()
    };
    let outcomes = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::Config(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    };

    let mut out = dataset.to_vec();
    let mut summaries = Vec::with_capacity(outcomes.len());
    let mut transcripts = Vec::new();
    let mut stages = StageTimings::default();
    for o in outcomes {
        stages.add(&o.timings);
        out.extend(o.augmented);
        if let Some(t) = o.transcript {
            transcripts.push((o.summary.id.clone(), t));
        }
        summaries.push(o.summary);
    }
    let stats = backends.cache.stats();
    let report = RunReport::from_summaries(dataset.len(), summaries, stats, config.clone());
    Ok(AugmentOutput {
        dataset: out,
        report,
        timings: Timings {
            total_secs: start.elapsed().as_secs_f64(),
            stages,
            cache: stats,
        },
        transcripts,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

/// Loads the configured dataset, augments it and writes every configured
/// output.
pub fn augment_dataset(config: &RunConfig) -> Result<(Dataset, RunReport)> {
    config.validate()?;
    let dataset = load_dataset(&config.dataset, config.format)?;
    if let Some(task) = config.task {
        if let Some(bad) = dataset.iter().find(|i| i.task != task) {
            return Err(PipelineError::Config(format!(
                "instance `{}` is {}, but the run is configured for {task}",
                bad.id, bad.task
            )));
        }
    }
    let notions = match &config.notions {
        Some(path) => NotionTable::load(path)?,
        None => NotionTable::new(),
    };
    let cache = Arc::new(match &config.output.cache {
        Some(path) => ResponseCache::open(path),
        None => ResponseCache::in_memory(),
    });
    let backends = Backends::from_config(config, &dataset, Arc::clone(&cache))?;
    let mut out = augment(&dataset, &notions, &backends, config)?;

    if let Some(eval) = &config.evaluation {
        let gold = load_dataset(&eval.gold, DatasetFormat::CanonicalJsonl)?;
        let predictions = load_dataset(&eval.predictions, DatasetFormat::CanonicalJsonl)?;
        let task = config
            .task
            .or_else(|| gold.first().map(|g| g.task))
            .ok_or_else(|| PipelineError::Config("evaluation gold set is empty".into()))?;
        out.report.metrics = Some(compute_metrics(&gold, &predictions, task)?);
    }

    let o = &config.output;
    if let Some(path) = &o.dataset {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        write_dataset(&out.dataset, path)?;
    }
    if let Some(path) = &o.report {
        write_json(path, &out.report)?;
    }
    if let Some(path) = &o.timings {
        write_json(path, &out.timings)?;
    }
    if let Some(dir) = &o.transcripts {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        for (id, t) in &out.transcripts {
            write_json(&dir.join(transcript_file_name(id)), t)?;
        }
    }
    if let Some(path) = &o.cache {
        cache.persist().map_err(|e| PipelineError::io(path, e))?;
    }
    Ok((out.dataset, out.report))
}
