use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use bioaug::backend::ResponseCache;
use bioaug::corpus::{load_dataset, DatasetFormat, NotionTable, Task};
use bioaug::pipeline::{
    attribute_instance, augment_dataset, compute_metrics, BackendMode, Backends, EvaluationConfig,
    MockExtractor, MockGenerator, MockScorer, PipelineError, RunConfig,
};
use bioaug::reflection::{render_prompt, run_debate, DebateConfig, PromptId, PromptVars};

#[derive(Parser)]
#[command(
    name = "bioaug",
    version,
    about = "Attribution-guided, debate-filtered data augmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Augment a dataset and write the output, report and transcripts.
    Augment(RunArgs),
    /// Print attribution maps, keywords and templates as JSON lines.
    Attribute {
        #[command(flatten)]
        run: RunArgs,
        /// Only these instance ids (repeatable).
        #[arg(long = "id")]
        ids: Vec<String>,
    },
    /// Run the debate on one original/augmented pair and print the transcript.
    Debate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        original: String,
        #[arg(long)]
        augmented: String,
        /// `TYPE=surface` of an entity that must survive (repeatable).
        #[arg(long = "entity")]
        entities: Vec<String>,
    },
    /// Score predictions against gold data.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, value_parser = parse_from_str::<DatasetFormat>, default_value = "canonical-jsonl")]
        format: DatasetFormat,
        /// Task to score; defaults to the task of the first gold instance.
        #[arg(long, value_parser = parse_from_str::<Task>)]
        task: Option<Task>,
    },
    /// List prompt templates, or render one with `--var name=value`.
    Prompts {
        #[arg(value_parser = parse_from_str::<PromptId>)]
        name: Option<PromptId>,
        #[arg(long = "var")]
        vars: Vec<String>,
    },
}

/// Flags mirroring `RunConfig`; each overrides the config file.
#[derive(Args, Default)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_parser = parse_from_str::<DatasetFormat>)]
    format: Option<DatasetFormat>,
    #[arg(long, value_parser = parse_from_str::<Task>)]
    task: Option<Task>,
    #[arg(long)]
    notions: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    proportion: Option<f64>,
    #[arg(long)]
    n_keywords: Option<usize>,
    #[arg(long)]
    k_exemplars: Option<usize>,
    #[arg(long)]
    similarity_threshold: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    n_agents: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_parser = parse_kebab::<BackendMode>)]
    backend: Option<BackendMode>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, value_parser = parse_kebab::<MockScorer>)]
    mock_scorer: Option<MockScorer>,
    #[arg(long, value_parser = parse_kebab::<MockGenerator>)]
    mock_generator: Option<MockGenerator>,
    #[arg(long, value_parser = parse_kebab::<MockExtractor>)]
    mock_extractor: Option<MockExtractor>,
    #[arg(long)]
    mock_grade: Option<u32>,
    /// Augmented dataset output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    timings: Option<PathBuf>,
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, requires = "predictions")]
    gold: Option<PathBuf>,
    #[arg(long, requires = "gold")]
    predictions: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            dataset => cfg.dataset,
            format => cfg.format,
            seed => cfg.seed,
            proportion => cfg.proportion,
            k_exemplars => cfg.k_exemplars,
            similarity_threshold => cfg.similarity_threshold,
            max_rounds => cfg.max_rounds,
            sigma => cfg.sigma,
            max_iters => cfg.max_iters,
            n_agents => cfg.n_agents,
            backend => cfg.backend.mode,
            mock_scorer => cfg.backend.mock_scorer,
            mock_generator => cfg.backend.mock_generator,
            mock_extractor => cfg.backend.mock_extractor,
            mock_grade => cfg.backend.mock_grade,
        }
        macro_rules! set_some {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = Some(v); })*
            };
        }
        set_some! {
            task => cfg.task,
            notions => cfg.notions,
            n_keywords => cfg.n_keywords,
            workers => cfg.workers,
            out => cfg.output.dataset,
            report => cfg.output.report,
            timings => cfg.output.timings,
            transcripts => cfg.output.transcripts,
            cache => cfg.output.cache,
        }
        if let (Some(gold), Some(predictions)) = (&self.gold, &self.predictions) {
            cfg.evaluation = Some(EvaluationConfig {
                gold: gold.clone(),
                predictions: predictions.clone(),
            });
        }
        // flags win over the environment
        cfg.apply_env(|k| std::env::var(k).ok());
        if let Some(url) = &self.endpoint {
            cfg.backend.endpoint = Some(url.clone());
        }
        Ok(cfg)
    }
}

fn backends_for(
    cfg: &RunConfig,
) -> Result<(Vec<bioaug::corpus::TaskInstance>, NotionTable, Backends), PipelineError> {
    let dataset = if cfg.dataset.as_os_str().is_empty() {
        Vec::new()
    } else {
        load_dataset(&cfg.dataset, cfg.format)?
    };
    let notions = match &cfg.notions {
        Some(p) => NotionTable::load(p)?,
        None => NotionTable::new(),
    };
    let cache = Arc::new(match &cfg.output.cache {
        Some(p) => ResponseCache::open(p),
        None => ResponseCache::in_memory(),
    });
    let backends = Backends::from_config(cfg, &dataset, cache)?;
    Ok((dataset, notions, backends))
}

fn print_json(value: &impl serde::Serialize) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    writeln!(io::stdout(), "{text}").map_err(|e| PipelineError::io("<stdout>".as_ref(), e))
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Augment(args) => {
            let cfg = args.to_config()?;
            let (_, report) = augment_dataset(&cfg)?;
            print!("{}", report.render_text());
            Ok(())
        }
        Command::Attribute { run, ids } => {
            let cfg = run.to_config()?;
            if cfg.dataset.as_os_str().is_empty() {
                return Err(PipelineError::Config("dataset path is required".into()));
            }
            let (dataset, notions, backends) = backends_for(&cfg)?;
            let mut out = io::stdout().lock();
            for inst in dataset
                .iter()
                .filter(|i| ids.is_empty() || ids.contains(&i.id))
            {
                let line = match attribute_instance(
                    inst,
                    &notions,
                    backends.lexicon.as_ref(),
                    backends.relation.as_ref(),
                    cfg.n_keywords,
                ) {
                    Ok(a) => serde_json::to_string(&a.report).expect("reports serialize"),
                    Err(e) => serde_json::json!({"instance_id": inst.id, "error": e.to_string()})
                        .to_string(),
                };
                writeln!(out, "{line}").map_err(|e| PipelineError::io("<stdout>".as_ref(), e))?;
            }
            Ok(())
        }
        Command::Debate {
            run,
            original,
            augmented,
            entities,
        } => {
            let cfg = run.to_config()?;
            let entities = entities
                .iter()
                .map(|e| {
                    e.split_once('=')
                        .map(|(t, s)| (t.to_string(), s.to_string()))
                        .ok_or_else(|| {
                            PipelineError::Config(format!("--entity `{e}` is not TYPE=surface"))
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (_, _, backends) = backends_for(&cfg)?;
            let debate = DebateConfig {
                sigma: cfg.sigma,
                max_iters: cfg.max_iters,
            };
            match run_debate(
                &original,
                &augmented,
                &entities,
                &backends.agents,
                &debate,
                cfg.seed,
            ) {
                Ok(t) => print_json(&t),
                Err(failure) => {
                    print_json(&*failure.transcript)?;
                    eprintln!("debate aborted: {}", failure.error);
                    Ok(())
                }
            }
        }
        Command::Eval {
            gold,
            predictions,
            format,
            task,
        } => {
            let gold = load_dataset(&gold, format)?;
            let predictions = load_dataset(&predictions, DatasetFormat::CanonicalJsonl)?;
            let task = task
                .or_else(|| gold.first().map(|g| g.task))
                .ok_or_else(|| PipelineError::Config("gold set is empty".into()))?;
            print_json(&compute_metrics(&gold, &predictions, task)?)
        }
        Command::Prompts { name, vars } => {
            let Some(id) = name else {
                for id in PromptId::ALL {
                    println!("{id}\t{}", id.variables().join(","));
                }
                return Ok(());
            };
            let mut values = PromptVars::new();
            for v in &vars {
                let (k, val) = v.split_once('=').ok_or_else(|| {
                    PipelineError::Config(format!("--var `{v}` is not name=value"))
                })?;
                values.insert(k.to_string(), val.to_string());
            }
            let rendered =
                render_prompt(id, &values).map_err(|e| PipelineError::Config(e.to_string()))?;
            println!("{}", rendered.text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ PipelineError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
